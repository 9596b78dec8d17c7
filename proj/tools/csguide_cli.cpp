#include <iostream>

#include "csguide/pipeline.hpp"

int main(int argc, char** argv) { return csguide::cli::run(argc, argv, std::cout, std::cerr); }
