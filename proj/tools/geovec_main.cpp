#include "geovec/cli.hpp"

int main(int argc, char** argv) { return geovec::run_cli(argc, argv); }
