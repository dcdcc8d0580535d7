#include "adenorm/cli.hpp"

int main(int argc, char** argv) { return adenorm::cli::run(argc, argv); }
