#include "kiprn/cli.hpp"

int main(int argc, char** argv) { return kiprn::run_cli(argc, argv); }
