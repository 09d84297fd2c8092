#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return bcensus::cli::run(argc, argv, std::cout, std::cerr); }
