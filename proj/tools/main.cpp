#include "cava/pipeline.hpp"

int main(int argc, char** argv) { return cava::cli_main(argc, argv); }
