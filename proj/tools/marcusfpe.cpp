#include "marcus/run.hpp"

int main(int argc, char** argv) { return marcus::run::run_cli(argc, argv); }
