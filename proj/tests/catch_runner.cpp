// Catch2 v3 amalgamated implementation, compiled once and linked into every
// test binary. The amalgamated source provides main().
#include <catch2/catch_amalgamated.cpp>
