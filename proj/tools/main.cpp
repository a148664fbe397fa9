#include "ferfusion/cli.hpp"

int main(int argc, char** argv) { return ferfusion::cli::run(argc, argv); }
