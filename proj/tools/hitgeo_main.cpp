#include <string>
#include <vector>

#include "hitgeo/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return hitgeo::cli_run(args);
}
