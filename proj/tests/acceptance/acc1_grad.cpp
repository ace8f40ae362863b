#include <cstdio>
int main() { std::puts("[FAIL] criterion 1: not implemented"); return 1; }
