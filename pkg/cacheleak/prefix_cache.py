"""
Radix-tree prefix cache over token sequences.

Prefixes are shared in blocks of `granularity` tokens: every edge label is a
whole number of blocks and siblings start with distinct first blocks. Inserts
drop a trailing partial block and matches are rounded down to a block
boundary. Eviction removes least-recently-touched leaves until the token
budget fits; nodes on the path of the insert being served are locked and
never evicted by it.

The cache holds no lock of its own; the serving engine serializes calls.
"""

import heapq
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import InvalidConfig, SequenceExceedsCapacity

logger = logging.getLogger(__name__)


@dataclass
class PrefixCacheConfig:
    """[kv_cache] section."""

    granularity: int = 1
    capacity_tokens: int = 2048

    def validate(self) -> None:
        if self.granularity < 1:
            raise InvalidConfig("kv_cache.granularity must be a positive integer")
        if self.capacity_tokens < 1:
            raise InvalidConfig("kv_cache.capacity_tokens must be a positive integer")


@dataclass
class MatchResult:
    shared_len: int
    matched_node_path: List[int] = field(default_factory=list)


class TreeNode:
    def __init__(self, node_id: int, key: Tuple[int, ...] = (), parent: Optional['TreeNode'] = None):
        self.id = node_id
        self.key = key
        self.parent = parent
        self.children: Dict[Tuple[int, ...], 'TreeNode'] = {}
        self.last_access = 0
        self.lock_ref = 0

    def is_leaf(self) -> bool:
        return not self.children


def _key_match(key0: Sequence[int], key1: Sequence[int], page_size: int) -> int:
    """Length of the common prefix of two keys, counted in whole pages."""
    if page_size == 1:
        i = 0
        for a, b in zip(key0, key1):
            if a != b:
                break
            i += 1
        return i
    min_len = min(len(key0), len(key1))
    i = 0
    while i + page_size <= min_len:
        if key0[i:i + page_size] != key1[i:i + page_size]:
            break
        i += page_size
    return i


class PrefixCache:
    """Radix tree with block granularity, LRU leaf eviction and a token budget."""

    def __init__(self, granularity: int = 1, capacity_tokens: int = 2048):
        PrefixCacheConfig(granularity, capacity_tokens).validate()
        self.granularity = granularity
        self.capacity_tokens = capacity_tokens
        self.clock = 0
        self.resident_tokens = 0
        self._next_id = 0
        self.root = self._new_node(())

    @classmethod
    def from_config(cls, config: PrefixCacheConfig) -> 'PrefixCache':
        return cls(granularity=config.granularity, capacity_tokens=config.capacity_tokens)

    def _new_node(self, key: Tuple[int, ...], parent: Optional[TreeNode] = None) -> TreeNode:
        node = TreeNode(self._next_id, key, parent)
        self._next_id += 1
        return node

    def _child_key(self, key: Sequence[int]) -> Tuple[int, ...]:
        """Children are keyed by their first block; siblings never share one."""
        return tuple(key[:self.granularity])

    def _aligned(self, seq: Sequence[int]) -> Tuple[int, ...]:
        aligned_len = len(seq) // self.granularity * self.granularity
        return tuple(seq[:aligned_len])

    def _tick(self) -> int:
        self.clock += 1
        return self.clock

    def match_prefix(self, query: Sequence[int]) -> MatchResult:
        """
        Find the longest cached prefix of a query.

        Args:
            query: Token ids (may be empty)

        Returns:
            MatchResult with shared_len a multiple of the granularity and the
            ids of the nodes covering the match
        """
        now = self._tick()
        key = self._aligned(query)
        node = self.root
        node.last_access = now
        path: List[int] = []
        shared = 0

        while key:
            child = node.children.get(self._child_key(key))
            if child is None:
                break
            child.last_access = now
            prefix_len = _key_match(child.key, key, self.granularity)
            if prefix_len < len(child.key):
                child = self._split_node(child, prefix_len)
            path.append(child.id)
            shared += prefix_len
            key = key[prefix_len:]
            node = child

        return MatchResult(shared_len=shared, matched_node_path=path)

    def peek_prefix(self, query: Sequence[int]) -> int:
        """Shared prefix length without touching ticks or splitting nodes."""
        key = self._aligned(query)
        node = self.root
        shared = 0
        while key:
            child = node.children.get(self._child_key(key))
            if child is None:
                break
            prefix_len = _key_match(child.key, key, self.granularity)
            shared += prefix_len
            if prefix_len < len(child.key):
                break
            key = key[prefix_len:]
            node = child
        return shared

    def insert(self, seq: Sequence[int]) -> int:
        """
        Cache a token sequence, evicting LRU leaves if the budget overflows.

        Args:
            seq: Token ids; a trailing partial block is not cached

        Returns:
            Number of newly cached tokens

        Raises:
            SequenceExceedsCapacity: If seq is longer than the whole budget
        """
        if len(seq) > self.capacity_tokens:
            raise SequenceExceedsCapacity(len(seq), self.capacity_tokens)

        now = self._tick()
        key = self._aligned(seq)
        node = self.root
        node.last_access = now

        while key:
            child = node.children.get(self._child_key(key))
            if child is None:
                break
            child.last_access = now
            prefix_len = _key_match(child.key, key, self.granularity)
            if prefix_len < len(child.key):
                child = self._split_node(child, prefix_len)
            node = child
            key = key[prefix_len:]

        if not key:
            return 0

        overflow = self.resident_tokens + len(key) - self.capacity_tokens
        if overflow > 0:
            self._inc_lock_ref(node)
            try:
                self.evict(overflow)
            finally:
                self._dec_lock_ref(node)
            # the locked path may hold the rest of the budget; keep what fits
            room = (self.capacity_tokens - self.resident_tokens) // self.granularity * self.granularity
            if room < len(key):
                logger.debug("Caching %d of %d new tokens", max(room, 0), len(key))
                key = key[:max(room, 0)]
                if not key:
                    return 0

        leaf = self._new_node(key, node)
        leaf.last_access = now
        node.children[self._child_key(key)] = leaf
        self.resident_tokens += len(key)
        return len(key)

    def evict(self, num_tokens: int) -> int:
        """
        Remove unlocked leaves, oldest tick first, until num_tokens are freed.

        Ties on the tick go to the leaf whose label starts with the smallest
        token id.

        Returns:
            Number of tokens actually freed
        """
        heap = [self._priority(leaf) for leaf in self._collect_leaves()]
        heapq.heapify(heap)

        freed = 0
        while freed < num_tokens and heap:
            *_, victim = heapq.heappop(heap)
            parent = victim.parent
            self._delete_leaf(victim)
            freed += len(victim.key)
            if parent is not self.root and parent.is_leaf() and parent.lock_ref == 0:
                heapq.heappush(heap, self._priority(parent))

        if freed:
            logger.debug("Evicted %d tokens, %d resident", freed, self.resident_tokens)
        return freed

    def flush(self) -> None:
        """Drop every cached prefix."""
        self.root.children = {}
        self.resident_tokens = 0

    def shared_prefix_stats(self) -> Tuple[int, int, int]:
        """
        Returns:
            (node_count including the root, resident_tokens, max_depth in tokens)
        """
        node_count = 0
        max_depth = 0
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            node_count += 1
            max_depth = max(max_depth, depth)
            for child in node.children.values():
                stack.append((child, depth + len(child.key)))
        return node_count, self.resident_tokens, max_depth

    def recount_tokens(self) -> int:
        """Sum of edge-label lengths from a full tree walk."""
        total = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            total += len(node.key)
            stack.extend(node.children.values())
        return total

    def to_dict(self, node: Optional[TreeNode] = None) -> Dict:
        """JSON-friendly dump of the tree, children ordered by their first block."""
        node = node or self.root
        return {
            'id': node.id,
            'key': list(node.key),
            'last_access': node.last_access,
            'children': [self.to_dict(node.children[k]) for k in sorted(node.children)],
        }

    ##### Internal helpers #####

    def _priority(self, node: TreeNode):
        return (node.last_access, node.key[0], node.id, node)

    def _split_node(self, child: TreeNode, split_len: int) -> TreeNode:
        # parent -> new_node -> child
        new_node = self._new_node(child.key[:split_len], child.parent)
        new_node.last_access = child.last_access
        new_node.lock_ref = child.lock_ref
        child.parent.children[self._child_key(child.key)] = new_node
        child.key = child.key[split_len:]
        child.parent = new_node
        new_node.children = {self._child_key(child.key): child}
        return new_node

    def _delete_leaf(self, node: TreeNode) -> None:
        removed = node.parent.children.pop(self._child_key(node.key), None)
        assert removed is node, "parent does not hold the evicted leaf"
        self.resident_tokens -= len(node.key)

    def _collect_leaves(self) -> List[TreeNode]:
        leaves = []
        stack = list(self.root.children.values())
        while stack:
            node = stack.pop()
            if node.is_leaf():
                if node.lock_ref == 0:
                    leaves.append(node)
            else:
                stack.extend(node.children.values())
        return leaves

    def _inc_lock_ref(self, node: TreeNode) -> None:
        while node is not self.root:
            node.lock_ref += 1
            node = node.parent

    def _dec_lock_ref(self, node: TreeNode) -> None:
        while node is not self.root:
            node.lock_ref -= 1
            node = node.parent
