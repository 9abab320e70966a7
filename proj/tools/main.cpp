#include <iostream>

#include "pcvae/cli.hpp"

int main(int argc, char** argv) { return pcvae::run_cli(argc, argv, std::cout, std::cerr); }
