"""
cacheleak - cache timing side channels in LLM serving, at desk scale.

A simulated serving engine with a prefix KV cache and a semantic cache,
the attacks that read their timing (prompt stealing, peeping neighbor,
document inference) and the mitigations that blunt them.
"""

__version__ = '0.1.0'
