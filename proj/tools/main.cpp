#include <vector>

#include "transt/cli.hpp"

int main(int argc, char** argv) {
    return transt::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
