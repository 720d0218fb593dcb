// Protocol peer for the subprocess tests: answers each request line with the
// scripted explorer. With "--crash" it exits after reading one request.
#include <iostream>
#include <string>

#include "ttsreplay/explorer.hpp"

int main(int argc, char** argv) {
  const bool crash = argc > 1 && std::string(argv[1]) == "--crash";
  ttsreplay::ScriptedMutationExplorer explorer(0);
  std::string line;
  while (std::getline(std::cin, line)) {
    if (crash) return 3;
    std::cout << explorer.exchange(line) << std::endl;
  }
  return 0;
}
