#include <iostream>
#include <string>
#include <vector>

#include "ttsreplay/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ttsreplay::dispatch(args, std::cout, std::cerr);
}
