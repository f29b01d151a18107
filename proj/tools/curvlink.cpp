#include <iostream>

#include "curvlink/cli.hpp"

int main(int argc, char** argv) { return curvlink::cli::run(argc, argv, std::cout, std::cerr); }
