# ASV Benchmarks for bilayer-kpm
"""
Benchmark suites for bilayer-kpm using airspeed velocity (ASV).

- bench_geometry: site enumeration and equidistribution diagnostics
- bench_hamiltonian: cluster assembly and sparse matvec
- bench_kpm: Chebyshev moment recursion and reconstruction

Note: The benchmark modules are imported lazily by ASV, not at package import time.
"""
