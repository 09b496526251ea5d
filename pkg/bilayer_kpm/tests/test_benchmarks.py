"""Tests for benchmark module discovery and structure."""

import inspect
import json
from pathlib import Path

import pytest


class TestBenchmarkDiscovery:
    """Test that ASV can discover all benchmarks."""

    @pytest.fixture
    def benchmark_dir(self):
        """Get the benchmarks directory."""
        return Path(__file__).parent.parent / "benchmarks"

    def test_benchmark_files_exist(self, benchmark_dir):
        """Verify expected benchmark files exist."""
        for filename in ("bench_geometry.py", "bench_hamiltonian.py", "bench_kpm.py"):
            assert (benchmark_dir / filename).exists(), f"Benchmark file not found: {filename}"


class TestBenchmarkClasses:
    """Test benchmark class structure for ASV compatibility."""

    @pytest.fixture
    def benchmark_modules(self):
        """Import all benchmark modules."""
        from bilayer_kpm.benchmarks import bench_geometry, bench_hamiltonian, bench_kpm

        return {"bench_geometry": bench_geometry, "bench_hamiltonian": bench_hamiltonian, "bench_kpm": bench_kpm}

    def test_suites_have_time_methods_and_setup(self, benchmark_modules):
        """Verify every suite has setup and at least one time_* method."""
        for module_name, module in benchmark_modules.items():
            for name, obj in inspect.getmembers(module, inspect.isclass):
                if name.endswith("Suite"):
                    assert hasattr(obj, "setup"), f"{module_name}.{name} missing setup method"
                    assert any(m.startswith("time_") for m in dir(obj)), f"{module_name}.{name} has no time_* methods"

    def test_param_names_match_params(self, benchmark_modules):
        """Verify param_names has one entry per parameter axis."""
        from bilayer_kpm.cli import _normalize_params

        for module in benchmark_modules.values():
            for name, obj in inspect.getmembers(module, inspect.isclass):
                if name.endswith("Suite") and getattr(obj, "params", None):
                    assert len(obj.param_names) == len(_normalize_params(obj.params)), name

    def test_kpm_suite_structure(self, benchmark_modules):
        """Test specific structure of the KPM suites."""
        kpm = benchmark_modules["bench_kpm"]
        assert kpm.MomentsSuite.param_names == ["p", "radius"]
        assert hasattr(kpm.MomentsSuite, "time_chebyshev_moments")
        assert hasattr(kpm.ReconstructionSuite, "time_ldos_values")

    def test_smallest_suite_runs(self):
        """Run the quick configuration of the moments suite once."""
        from bilayer_kpm.benchmarks.bench_kpm import MomentsSuite

        suite = MomentsSuite()
        suite.setup(64, 20.0)
        suite.time_chebyshev_moments(64, 20.0)


class TestASVConfig:
    """Test ASV configuration."""

    @pytest.fixture
    def asv_config(self):
        with open(Path(__file__).parent.parent / "asv.conf.json") as f:
            return json.load(f)

    def test_asv_config_paths(self, asv_config):
        """Verify ASV config has correct paths."""
        assert asv_config["version"] == 1
        assert asv_config["project"] == "bilayer-kpm"
        assert asv_config["benchmark_dir"] == "benchmarks"
