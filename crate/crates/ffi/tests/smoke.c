#include <math.h>
#include <stdio.h>
#include "spectrans.h"

int main(void) {
    SpectransModel *hn = NULL;
    if (spectrans_model_hatano_nelson(3.0, 1.0, &hn) != SPECTRANS_STATUS_OK) return 1;
    double g = 0.0;
    if (spectrans_gw_thermo(hn, 0.0, 512, &g) != SPECTRANS_STATUS_OK) return 2;
    if (fabs(g - 10.0) > 1e-9) return 3;
    if (spectrans_gw_thermo(NULL, 0.0, 512, &g) != SPECTRANS_STATUS_NULL_POINTER) return 4;
    char msg[64];
    if (spectrans_last_error(msg, sizeof msg) == 0) return 5;
    spectrans_model_free(hn);
    printf("ok %.12f\n", g);
    return 0;
}
