#include <iostream>

#include "layoutvae/cli.hpp"

int main(int argc, char** argv) {
    return layoutvae::run_cli(argc, argv, std::cout, std::cerr);
}
