#include "langdaug/cli.hpp"

int main(int argc, char** argv) {
    return langdaug::run_cli(std::vector<std::string>(argv, argv + argc));
}
