#include <benchmark/benchmark.h>

// The distro libbenchmark_main.a carries LTO bytecode from another GCC.
BENCHMARK_MAIN();
