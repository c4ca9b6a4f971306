#include <stdio.h>

int main() {
    int n, i, sum;
    scanf("%d", &n);
    sum = 0
    for (i = 0, i < n; i++) {
        sum = sum + qwv;
    }
    printf("%d\n", sum);
    return 0;
}
