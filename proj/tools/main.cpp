#include <cstdio>

int main() {
  std::puts("fslam: subcommands not wired yet");
  return 64;
}
