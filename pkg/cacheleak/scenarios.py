"""
Experiment scenarios

Each scenario:
1. Builds its engine and clients from the resolved configuration
2. Runs the attack or characterization in virtual time
3. Writes summary.csv (and scenario-specific files) to the output directory
4. Evaluates its acceptance checks

Scenarios run against an in-process engine, or against a running server
when server.url is set (the server then needs admin mode for flushes).
"""

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .anonymizer import SENTENCE_TEMPLATES, Anonymizer, pii_sentences, pii_values, restore
from .client import EngineClient, HttpClient, InProcessClient
from .config import ExperimentConfig
from .corpus import RARE, SYSTEM_TAG, build_corpus, document_words, filler_words
from .engine import ServingEngine
from .errors import InvalidConfig
from .kgran import KSWEEP_FIELDS, run_ksweep
from .latency import LatencyParams, calibrate_noise, semantic_threshold
from .pna import (DOC_FIELDS, PNA_SUMMARY_FIELDS, ROUND_FIELDS, PnaConfig, VictimMix, attribute_advantage,
                  make_flood_evictor, make_flush_evictor, run_document_inference, run_rounds, select_probes,
                  semantic_leakage_samples)
from .prefix_cache import PrefixCacheConfig
from .probe import HIT, SAMPLE_FIELDS, VoteConfig, vote
from .psa import SUMMARY_FIELDS, make_victim_trigger, recover_prompt, train_predictor
from .report import RowCollector, export_to_csv, export_to_jsonl, output_path
from .rng import SeededRNG, derive_seed
from .roc import ROC_FIELDS, best_tpr_at, operating_point, roc, roc_rows
from .semantic_cache import SemanticCacheConfig

logger = logging.getLogger(__name__)

ROC_SUMMARY_FIELDS = ['series', 'auc', 'tpr', 'fpr', 'tpr_at_fpr_0.1']
METRIC_FIELDS = ['metric', 'value']
PROFILE_FIELDS = ['length', 'delta_ms', 'delta_per_token_ms']
OVERHEAD_FIELDS = ['sentences', 'mean_overhead_ms', 'semantic_hit_ms', 'ratio']


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ''


@dataclass
class ScenarioResult:
    scenario: str
    summary_fields: List[str]
    summary_rows: List[Dict]
    files: List[str] = field(default_factory=list)
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


##### Shared plumbing #####


def make_engine(cfg: ExperimentConfig, latency: Optional[LatencyParams] = None,
                kv: Optional[PrefixCacheConfig] = None, semantic: Optional[SemanticCacheConfig] = None,
                vocab=None) -> ServingEngine:
    return ServingEngine(latency=latency or cfg.latency, kv_config=kv or cfg.kv_cache,
                         semantic_config=semantic or cfg.semantic_cache, vocab=vocab)


def open_clients(cfg: ExperimentConfig, engine: ServingEngine) -> Tuple[EngineClient, EngineClient]:
    """(attacker, victim) clients: HTTP when server.url is set, else in-process."""
    if cfg.server.url:
        attacker = HttpClient(cfg.server.url, session='attacker', realtime=cfg.server.realtime, debug=cfg.debug)
        logger.info("Using server at %s; its engine settings apply", cfg.server.url)
    else:
        attacker = InProcessClient(engine, session='attacker', debug=cfg.debug)
    return attacker, attacker.with_session('victim')


def calibrated(cfg: ExperimentConfig) -> Tuple[LatencyParams, VoteConfig]:
    """Latency and vote settings, with noise and theta calibrated when psa.calibrate_noise is set."""
    if not cfg.psa.calibrate_noise:
        return cfg.latency, cfg.vote
    cal = calibrate_noise(cfg.latency)
    logger.info("Calibrated noise sigma=%.4f ms theta=%.4f ms", cal.sigma * 1e3, cal.theta * 1e3)
    return (dataclasses.replace(cfg.latency, noise_sigma=cal.sigma),
            dataclasses.replace(cfg.vote, theta=cal.theta))


def _fmt(value: float, digits: int = 4) -> str:
    return 'inf' if np.isinf(value) else f"{value:.{digits}f}"


##### Prompt stealing #####


def run_psa(cfg: ExperimentConfig) -> ScenarioResult:
    corpus = build_corpus(cfg.corpus, cfg.seed)
    vocab = corpus.vocab
    system_id = vocab.id_of[SYSTEM_TAG]
    predictor = train_predictor([[system_id] + p for p in corpus.attacker_prompts()], len(vocab),
                                cfg.psa.predictor_order, cfg.psa.smoothing_alpha)
    latency, vote_cfg = calibrated(cfg)
    psa_cfg = dataclasses.replace(cfg.psa, vote=vote_cfg)

    engine = make_engine(cfg, latency=latency, vocab=vocab)
    attacker, victim = open_clients(cfg, engine)
    samples = RowCollector(['prompt_id'] + SAMPLE_FIELDS)
    traces = []
    for prompt_id in corpus.victim_split[:psa_cfg.victims]:
        attacker.flush('both')
        system_text = corpus.text(prompt_id)
        trigger = make_victim_trigger(victim, system_text, psa_cfg.trigger_text)
        sink = lambda row, pid=prompt_id: samples({'prompt_id': pid, **row})  # noqa: E731
        trace = recover_prompt(attacker, trigger, predictor, psa_cfg, vocab, secret=system_text.split(),
                               prompt_id=prompt_id, seed=derive_seed(cfg.seed, f"psa:{prompt_id}"),
                               sample_sink=sink)
        logger.info("Prompt %d: %d/%d tokens, %d queries", prompt_id, trace.correct_tokens,
                    trace.target_length, trace.total_queries)
        traces.append(trace)

    files = [output_path(cfg.output_dir, 'trace.jsonl'), output_path(cfg.output_dir, 'samples.csv')]
    export_to_jsonl((line for t in traces for line in t.jsonl_records()), files[0])
    samples.write(files[1])

    committed = sum(t.tokens_recovered for t in traces)
    correct = sum(t.correct_tokens for t in traces)
    queries = sum(t.total_queries for t in traces)
    accuracy = correct / committed if committed else 0.0
    per_token = queries / correct if correct else float('inf')
    checks = [
        Check('accuracy >= 0.85', accuracy >= 0.85, f"{accuracy:.4f}"),
        Check('queries per recovered token in [50, 400]', 50 <= per_token <= 400, _fmt(per_token, 2)),
    ]
    if latency.noise_sigma == 0 and psa_cfg.cross_verify:
        false_accepts = sum(t.false_accepts for t in traces)
        checks.append(Check('no false accepts without noise', false_accepts == 0, str(false_accepts)))
    return ScenarioResult('psa', SUMMARY_FIELDS, [t.summary_row() for t in traces], files, checks)


##### Peeping neighbor #####


def _semantic_on(cfg: ExperimentConfig, anonymize: Optional[bool] = None) -> SemanticCacheConfig:
    flag = cfg.semantic_cache.anonymize if anonymize is None else anonymize
    return dataclasses.replace(cfg.semantic_cache, enabled=True, anonymize=flag)


def _pna_attack(cfg: ExperimentConfig, pna_cfg: PnaConfig, semantic: SemanticCacheConfig, rounds: int,
                label: str, rows: Optional[RowCollector] = None):
    engine = make_engine(cfg, semantic=semantic)
    attacker, victim = open_clients(cfg, engine)
    threshold = pna_cfg.decision_threshold or semantic_threshold(cfg.latency)
    probes = select_probes(pna_cfg, semantic.threshold, dimension=semantic.dimension)
    rng = SeededRNG(derive_seed(cfg.seed, label))
    if pna_cfg.eviction == 'flood':
        evictor = make_flood_evictor(attacker, pna_cfg.flood_requests, rng.fork('flood'), pna_cfg.flood_words)
    else:
        evictor = make_flush_evictor(attacker)
    stats = run_rounds(attacker, victim, VictimMix(), probes, rounds, evictor, threshold, rng.fork('rounds'),
                       lookup_only=pna_cfg.probe_mode == 'lookup', row_sink=rows)
    return probes, stats


def run_pna(cfg: ExperimentConfig) -> ScenarioResult:
    rows = RowCollector(ROUND_FIELDS)
    probes, stats = _pna_attack(cfg, cfg.pna, _semantic_on(cfg), cfg.pna.rounds, 'pna', rows)

    files = [output_path(cfg.output_dir, 'rounds.csv'), output_path(cfg.output_dir, 'trace.jsonl')]
    rows.write(files[0])
    export_to_jsonl((json.dumps({'rank': i, 'probe': p.text}) for i, p in enumerate(probes, start=1)),
                    files[1])

    m_max = len(probes)
    tprs = [stats.tpr(m) for m in range(1, m_max + 1)]
    checks = [
        Check('5 probes selected', m_max == 5, str(m_max)),
        Check('TPR non-decreasing in probe count', all(a <= b for a, b in zip(tprs, tprs[1:])),
              ' '.join(f"{t:.3f}" for t in tprs)),
    ]
    if m_max:
        checks.append(Check('TPR >= 0.80 at 1 probe', tprs[0] >= 0.80, f"{tprs[0]:.4f}"))
        checks.append(Check(f'TPR >= 0.93 at {m_max} probes', tprs[-1] >= 0.93, f"{tprs[-1]:.4f}"))
        ordered = all(stats.rate(2, m) > stats.rate(3, m) > stats.rate(4, m) for m in range(1, m_max + 1))
        checks.append(Check('FPR type2 > type3 > type4', ordered))
    return ScenarioResult('pna', PNA_SUMMARY_FIELDS, stats.summary_rows(), files, checks)


##### Document inference #####


def run_doc(cfg: ExperimentConfig) -> ScenarioResult:
    kv = dataclasses.replace(cfg.kv_cache, capacity_tokens=cfg.doc.kv_capacity_tokens)
    engine = make_engine(cfg, kv=kv, semantic=dataclasses.replace(cfg.semantic_cache, enabled=False))
    attacker, victim = open_clients(cfg, engine)
    rows = RowCollector(DOC_FIELDS)
    stats = run_document_inference(attacker, victim, cfg.doc, SeededRNG(derive_seed(cfg.seed, 'doc')),
                                   expire=lambda: attacker.flush('kv'), row_sink=rows)
    files = [output_path(cfg.output_dir, 'probes.csv')]
    rows.write(files[0])
    summary = [
        {'metric': 'accuracy', 'value': f"{stats.accuracy:.4f}"},
        {'metric': 'tpr', 'value': f"{stats.tpr:.4f}"},
        {'metric': 'fpr', 'value': f"{stats.fpr:.4f}"},
        {'metric': 'probes', 'value': stats.total},
    ]
    checks = [
        Check('accuracy >= 0.85', stats.accuracy >= 0.85, f"{stats.accuracy:.4f}"),
        Check('FPR <= 0.08', stats.fpr <= 0.08, f"{stats.fpr:.4f}"),
    ]
    return ScenarioResult('doc', METRIC_FIELDS, summary, files, checks)


##### Granularity sweep #####


def run_ksweep_scenario(cfg: ExperimentConfig) -> ScenarioResult:
    corpus = build_corpus(cfg.corpus, cfg.seed)
    system_id = corpus.vocab.id_of[SYSTEM_TAG]
    predictor = train_predictor([[system_id] + p for p in corpus.attacker_prompts()], len(corpus.vocab),
                                cfg.psa.predictor_order, cfg.psa.smoothing_alpha)
    latency, vote_cfg = calibrated(cfg)
    psa_cfg = dataclasses.replace(cfg.psa, vote=vote_cfg)
    rows = run_ksweep(cfg.ksweep, corpus, predictor, psa_cfg, latency, cfg.kv_cache, cfg.seed, debug=cfg.debug)

    recovery = [r.recovery_rate for r in rows]
    per_token = [r.queries_per_token for r in rows]
    checks = [
        Check('recovery rate non-increasing in K', all(a >= b for a, b in zip(recovery, recovery[1:])),
              ' '.join(f"{v:.3f}" for v in recovery)),
        Check('queries per token non-decreasing in K', all(a <= b for a, b in zip(per_token, per_token[1:])),
              ' '.join(f"{v:.1f}" for v in per_token)),
    ]
    return ScenarioResult('ksweep', KSWEEP_FIELDS, [r.to_row() for r in rows], [], checks)


##### Anonymization #####


def sharing_hit_rate(cfg: ExperimentConfig, anonymize: bool, pairs: int, rng: SeededRNG) -> float:
    """
    Fraction of second requests served from the semantic cache when two users
    send the same sentence template with different private values.
    """
    engine = make_engine(cfg, semantic=_semantic_on(cfg, anonymize))
    first, second = open_clients(cfg, engine)
    threshold = semantic_threshold(cfg.latency)
    hits = 0
    for _ in range(pairs):
        first.flush('semantic')
        template = rng.choice(SENTENCE_TEMPLATES)
        values_a = pii_values(rng)
        values_b = pii_values(rng)
        values_b['condition'] = values_a['condition']
        first.direct_ttft(template.format(**values_a))
        if second.direct_ttft(template.format(**values_b)) < threshold:
            hits += 1
    return hits / pairs


def measure_overhead(sentences: List[str], anonymizer: Anonymizer) -> float:
    """Mean wall-clock seconds of anonymize plus restore per sentence."""
    start = time.perf_counter()
    for sentence in sentences:
        text, restore_map = anonymizer.anonymize(sentence)
        restore(text, restore_map)
    return (time.perf_counter() - start) / len(sentences)


def run_anonymize(cfg: ExperimentConfig) -> ScenarioResult:
    acfg = cfg.anonymize
    rng = SeededRNG(derive_seed(cfg.seed, 'anonymize'))
    anonymizer = Anonymizer()

    sentences = pii_sentences(rng.fork('sentences'), acfg.sentences)
    exact = 0
    for sentence in sentences:
        text, restore_map = anonymizer.anonymize(sentence)
        if restore(text, restore_map).text == sentence:
            exact += 1

    plain = sharing_hit_rate(cfg, False, acfg.sharing_pairs, rng.fork('sharing'))
    masked = sharing_hit_rate(cfg, True, acfg.sharing_pairs, rng.fork('sharing'))

    _, stats = _pna_attack(cfg, cfg.pna, _semantic_on(cfg, True), acfg.pna_rounds, 'anonymize:pna')
    m = stats.max_probes
    advantage = attribute_advantage(stats, m) if m else 0.0

    overhead = measure_overhead(sentences, anonymizer)
    ratio = overhead / cfg.latency.semantic_hit_latency
    files = [output_path(cfg.output_dir, 'overhead.csv')]
    export_to_csv([{'sentences': len(sentences), 'mean_overhead_ms': f"{overhead * 1e3:.4f}",
                    'semantic_hit_ms': f"{cfg.latency.semantic_hit_latency * 1e3:.1f}",
                    'ratio': f"{ratio:.5f}"}], files[0], OVERHEAD_FIELDS)

    summary = [
        {'metric': 'round_trip_exact', 'value': exact},
        {'metric': 'round_trip_total', 'value': len(sentences)},
        {'metric': 'hit_rate_plain', 'value': f"{plain:.4f}"},
        {'metric': 'hit_rate_anonymized', 'value': f"{masked:.4f}"},
        {'metric': 'pna_tpr', 'value': f"{stats.tpr(m):.4f}"},
        {'metric': 'pna_fpr_type2', 'value': f"{stats.rate(2, m):.4f}"},
        {'metric': 'pna_fpr_type3', 'value': f"{stats.rate(3, m):.4f}"},
        {'metric': 'pna_advantage', 'value': f"{advantage:.4f}"},
    ]
    checks = [
        Check('round trip exact', exact == len(sentences), f"{exact}/{len(sentences)}"),
        Check('sharing increases with anonymization', masked > plain, f"{plain:.3f} -> {masked:.3f}"),
        Check('attribute advantage < 0.05', advantage < 0.05, f"{advantage:.4f}"),
        Check('overhead < 10% of semantic hit', ratio < 0.10, f"{ratio:.5f}"),
    ]
    return ScenarioResult('anonymize', METRIC_FIELDS, summary, files, checks)


##### Leakage characterization #####


def _random_words(rng: SeededRNG, pool: List[str], count: int) -> List[str]:
    return [pool[rng.randrange(len(pool))] for _ in range(count)]


def kv_shared_prefix_samples(client: EngineClient, shared: int, length: int, trials: int,
                             rng: SeededRNG) -> Tuple[List[float], List[int]]:
    """
    TTFT scores for prompts sharing `shared` leading tokens with a cached
    prompt (label 1) versus sharing none (label 0). Score is -TTFT.
    """
    fillers, tails = filler_words(), document_words()
    scores: List[float] = []
    labels: List[int] = []
    for _ in range(trials):
        for label in (1, 0):
            client.flush('kv')
            cached = _random_words(rng, fillers, length)
            client.direct_ttft(' '.join(cached))
            head = cached[:shared] if label else []
            query = head + _random_words(rng, tails, length - len(head))
            scores.append(-client.direct_ttft(' '.join(query)))
            labels.append(label)
    return scores, labels


def delta_profile(client: EngineClient, lengths: List[int], rng: SeededRNG) -> List[Dict]:
    """Miss-minus-hit TTFT of a fully cached prompt against a fully uncached one, per length."""
    fillers = filler_words()
    rows = []
    for length in lengths:
        client.flush('kv')
        prompt = _random_words(rng, fillers, length)
        client.direct_ttft(' '.join(prompt))
        hit = client.direct_ttft(' '.join(prompt))
        miss = client.direct_ttft(' '.join([RARE] + _random_words(rng, document_words(), length - 1)))
        delta = miss - hit
        rows.append({'length': length, 'delta_ms': f"{delta * 1e3:.9f}",
                     'delta_per_token_ms': f"{delta / length * 1e3:.9f}"})
    return rows


def vote_trials(client: EngineClient, vote_cfg: VoteConfig, trials: int, rng: SeededRNG,
                prefix_len: int = 16) -> Dict[str, float]:
    """
    Empirical single-sample and voted rates for a one-token hit versus miss.

    Each sample restores the cache to the cached victim prompt first.
    """
    fillers, outsiders = filler_words(), document_words()
    counts = {'vote_tp': 0, 'vote_fp': 0, 'single_tp': 0, 'single_fp': 0}
    for _ in range(trials):
        victim_prompt = _random_words(rng, fillers, 2 * prefix_len)
        victim_text = ' '.join(victim_prompt)

        def restore_cache() -> None:
            client.flush('kv')
            client.direct_ttft(victim_text)

        prefix = victim_prompt[:prefix_len]
        reference = ' '.join(prefix + [RARE])
        for label, next_word in ((1, victim_prompt[prefix_len]), (0, outsiders[rng.randrange(len(outsiders))])):
            outcome = vote(client, ' '.join(prefix + [next_word]), reference, vote_cfg, evictor=restore_cache)
            kind = 'tp' if label else 'fp'
            counts[f'vote_{kind}'] += int(outcome.decision == HIT)
            counts[f'single_{kind}'] += outcome.hits
    return {
        'single_tpr': counts['single_tp'] / (trials * vote_cfg.n),
        'single_fpr': counts['single_fp'] / (trials * vote_cfg.n),
        'vote_tpr': counts['vote_tp'] / trials,
        'vote_fpr': counts['vote_fp'] / trials,
    }


def run_roc_kv(cfg: ExperimentConfig) -> ScenarioResult:
    rcfg = cfg.roc
    latency, vote_cfg = calibrated(cfg)
    engine = make_engine(cfg, latency=latency, semantic=dataclasses.replace(cfg.semantic_cache, enabled=False))
    client, _ = open_clients(cfg, engine)
    rng = SeededRNG(derive_seed(cfg.seed, 'roc-kv'))

    summary: List[Dict] = []
    curves = RowCollector(['series'] + ROC_FIELDS)
    checks: List[Check] = []
    for shared in rcfg.shared_tokens:
        scores, labels = kv_shared_prefix_samples(client, shared, rcfg.prompt_length, rcfg.trials,
                                                  rng.fork(f"shared:{shared}"))
        points, auc = roc(scores, labels)
        for row in roc_rows(points):
            curves({'series': f"shared_{shared}", **row})
        summary.append({'series': f"shared_{shared}", 'auc': f"{auc:.4f}", 'tpr': '', 'fpr': '',
                        'tpr_at_fpr_0.1': f"{best_tpr_at(points, 0.1):.4f}"})

    rates = vote_trials(client, vote_cfg, rcfg.trials, rng.fork('vote'))
    summary.append({'series': 'single_trial', 'auc': '', 'tpr': f"{rates['single_tpr']:.4f}",
                    'fpr': f"{rates['single_fpr']:.4f}", 'tpr_at_fpr_0.1': ''})
    summary.append({'series': f"vote_{vote_cfg.n}_of_{vote_cfg.k}", 'auc': '', 'tpr': f"{rates['vote_tpr']:.4f}",
                    'fpr': f"{rates['vote_fpr']:.4f}", 'tpr_at_fpr_0.1': ''})

    # exact timing law needs a noise-free engine
    quiet = make_engine(cfg, latency=dataclasses.replace(latency, noise_sigma=0.0),
                        semantic=dataclasses.replace(cfg.semantic_cache, enabled=False))
    profile = delta_profile(InProcessClient(quiet), rcfg.profile_lengths, rng.fork('profile'))

    files = [output_path(cfg.output_dir, 'roc.csv'), output_path(cfg.output_dir, 'profile.csv')]
    curves.write(files[0])
    export_to_csv(profile, files[1], PROFILE_FIELDS)

    gap_ms = latency.token_gap * 1e3
    per_token = [float(r['delta_per_token_ms']) for r in profile]
    if cfg.psa.calibrate_noise:
        checks.append(Check('single-trial rates near (0.88, 0.10)',
                            abs(rates['single_tpr'] - 0.88) <= 0.03 and abs(rates['single_fpr'] - 0.10) <= 0.03,
                            f"{rates['single_tpr']:.4f}/{rates['single_fpr']:.4f}"))
    checks.extend([
        Check('vote TPR >= 0.99 and FPR <= 0.01', rates['vote_tpr'] >= 0.99 and rates['vote_fpr'] <= 0.01,
              f"{rates['vote_tpr']:.4f}/{rates['vote_fpr']:.4f}"),
        Check('per-token gap independent of length',
              all(abs(p - gap_ms) <= 1e-6 * gap_ms for p in per_token), f"gap {gap_ms:.6f} ms"),
    ])
    return ScenarioResult('roc-kv', ROC_SUMMARY_FIELDS, summary, files, checks)


def run_roc_semantic(cfg: ExperimentConfig) -> ScenarioResult:
    rcfg = cfg.roc
    dimension = cfg.semantic_cache.dimension
    summary: List[Dict] = []
    curves = RowCollector(['series'] + ROC_FIELDS)
    best: Dict[str, Tuple[float, float]] = {}
    for variant in ('both', 'one'):
        samples = semantic_leakage_samples(SeededRNG(derive_seed(cfg.seed, f"roc-semantic:{variant}")), variant,
                                           rcfg.semantic_targets, rcfg.reference_fraction, dimension=dimension)
        points, auc = roc(samples.scores, samples.labels)
        point = operating_point(samples.scores, samples.labels, rcfg.semantic_threshold)
        for row in roc_rows(points):
            curves({'series': f"{variant}_differ", **row})
        best[variant] = (auc, best_tpr_at(points, 0.1))
        summary.append({'series': f"{variant}_differ", 'auc': f"{auc:.4f}", 'tpr': f"{point.tpr:.4f}",
                        'fpr': f"{point.fpr:.4f}", 'tpr_at_fpr_0.1': f"{best[variant][1]:.4f}"})

    files = [output_path(cfg.output_dir, 'roc.csv')]
    curves.write(files[0])
    checks = [
        Check('both-differ AUC >= 0.95', best['both'][0] >= 0.95, f"{best['both'][0]:.4f}"),
        Check('both-differ TPR >= 0.95 at FPR <= 0.1', best['both'][1] >= 0.95, f"{best['both'][1]:.4f}"),
        Check('one-differ TPR >= 0.85 at FPR <= 0.1', best['one'][1] >= 0.85, f"{best['one'][1]:.4f}"),
    ]
    return ScenarioResult('roc-semantic', ROC_SUMMARY_FIELDS, summary, files, checks)


RUNNERS: Dict[str, Callable[[ExperimentConfig], ScenarioResult]] = {
    'psa': run_psa,
    'pna': run_pna,
    'doc': run_doc,
    'ksweep': run_ksweep_scenario,
    'anonymize': run_anonymize,
    'roc-kv': run_roc_kv,
    'roc-semantic': run_roc_semantic,
}


def run(cfg: ExperimentConfig) -> ScenarioResult:
    """
    Run the configured scenario and write its summary.

    Raises:
        InvalidConfig: For an unknown scenario
        CacheLeakError: From the scenario itself
        OSError: If reports cannot be written
    """
    runner = RUNNERS.get(cfg.scenario)
    if runner is None:
        raise InvalidConfig(f"Unknown scenario {cfg.scenario!r}")
    result = runner(cfg)
    summary_file = output_path(cfg.output_dir, 'summary.csv')
    export_to_csv(result.summary_rows, summary_file, result.summary_fields)
    result.files.insert(0, summary_file)
    return result
