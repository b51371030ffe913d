// Placeholder main; replaced by the full CLI once the experiment runners land.
#include <cstdio>

int main() {
    std::puts("fexp: not wired up yet");
    return 2;
}
