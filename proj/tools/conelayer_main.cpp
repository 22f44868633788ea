#include <string>
#include <vector>

#include "conelayer/io.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return conelayer::run_cli(args);
}
