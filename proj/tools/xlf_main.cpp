#include <vector>

#include "xlf/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return xlf::run_cli(args);
}
