#include <cstdio>
int main() { std::puts("[FAIL] criterion 9: not implemented"); return 1; }
