#include <iostream>

#include "llmcodec/cli.hpp"

int main(int argc, char** argv) { return llmcodec::cli::run(argc, argv, std::cout, std::cerr); }
