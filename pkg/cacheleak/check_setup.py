"""
Setup check

Verifies that an experiment can run without running one:
1. Required packages import
2. The configuration (file, .env and environment) parses and validates
3. The configured server answers /health (skipped without server.url)
4. An in-process engine serves a request and reports a cache hit on repeat
"""

import importlib
import logging
from typing import Callable, List, Optional, Tuple

from .errors import CacheLeakError

logger = logging.getLogger(__name__)

REQUIRED_PACKAGES = ('numpy', 'requests', 'dotenv')


def test_dependencies() -> bool:
    """Test if all required dependencies are installed."""
    print("Testing Python dependencies...")
    ok = True
    for name in REQUIRED_PACKAGES:
        try:
            module = importlib.import_module(name)
        except ImportError:
            print(f"  [FAIL] {name} not found")
            ok = False
            continue
        print(f"  [OK] {name} version: {getattr(module, '__version__', 'installed')}")
    print()
    return ok


def test_config(path: Optional[str]) -> Tuple[bool, object]:
    """Test that the configuration resolves and validates."""
    print("Testing experiment configuration...")
    from .config import load_config

    try:
        config = load_config(path)
    except CacheLeakError as e:
        print(f"  [FAIL] {e}")
        print()
        return False, None
    print(f"  [OK] scenario = {config.scenario}, seed = {config.seed}, output_dir = {config.output_dir}")
    print()
    return True, config


def test_server(config) -> bool:
    """Test that the configured server answers its health endpoint."""
    print("Testing serving engine endpoint...")
    if config is None or not config.server.url:
        print("  [OK] No server.url configured; scenarios run in-process")
        print()
        return True

    from .client import HttpClient

    print(f"  --> Connecting to {config.server.url}...")
    try:
        health = HttpClient(config.server.url, timeout=10).health()
    except CacheLeakError as e:
        print(f"  [FAIL] {e}")
        print()
        return False
    print(f"  [OK] Server status: {health.get('status', 'unknown')}")
    print()
    return True


def test_engine() -> bool:
    """Test that a repeated request reads faster than the first one."""
    print("Testing in-process engine...")
    from .client import InProcessClient
    from .engine import ServingEngine
    from .latency import LatencyParams

    client = InProcessClient(ServingEngine(latency=LatencyParams(noise_sigma=0.0)))
    text = "you are a helpful assistant"
    first = client.direct_ttft(text)
    second = client.direct_ttft(text)
    if second < first:
        print(f"  [OK] Miss {first * 1e3:.3f} ms, hit {second * 1e3:.3f} ms")
        print()
        return True
    print(f"  [FAIL] Repeat was not faster ({first * 1e3:.3f} ms vs {second * 1e3:.3f} ms)")
    print()
    return False


def run_checks(config_path: Optional[str] = None) -> int:
    """
    Run every check and print a summary.

    Returns:
        0 when all checks pass, 1 otherwise
    """
    print("=" * 70)
    print("cacheleak - Setup Check")
    print("=" * 70)
    print()

    results: List[bool] = [test_dependencies()]
    config_ok, config = test_config(config_path)
    results.append(config_ok)
    checks: List[Callable[[], bool]] = [lambda: test_server(config), test_engine]
    results.extend(check() for check in checks)

    passed = sum(results)
    print("=" * 70)
    print(f"Test Results: {passed}/{len(results)} passed")
    print("=" * 70)

    if passed == len(results):
        print()
        print("[SUCCESS] All checks passed!")
        print()
        print("Next steps:")
        print("  1. Run: cacheleak attack psa --config configs/experiment.toml")
        print("  2. Review summary.csv in the output directory")
        print()
        return 0

    print()
    print("[FAIL] Some checks failed. Please review the errors above.")
    print()
    print("Common solutions:")
    print("  - Install dependencies: pip install -r requirements.txt")
    print("  - Create .env file based on .env.example")
    print("  - Start the server with: cacheleak serve --config configs/experiment.toml")
    print()
    return 1
