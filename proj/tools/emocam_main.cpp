#include <vector>

#include "emocam/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return emocam::cli::run(args);
}
