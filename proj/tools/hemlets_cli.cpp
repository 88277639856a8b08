#include "hemlets/cli.hpp"

int main(int argc, char** argv)
{
    return hemlets::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
