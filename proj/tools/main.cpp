#include "cli.hpp"

int main(int argc, char** argv)
{
    return therblig::cli::run(argc, argv);
}
