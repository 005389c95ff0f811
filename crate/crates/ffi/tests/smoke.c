#include <math.h>
#include <stdio.h>
#include "decaylab.h"

#define CHECK(x) do { if ((x) != DL_STATUS_OK) { fprintf(stderr, "%s: %s\n", #x, dl_last_error()); return 1; } } while (0)

int main(void) {
    DlMeasure *mu = NULL, *diff = NULL;
    CHECK(dl_measure_uniform(1.0, 2.0, 8, &mu));
    CHECK(dl_convolve(mu, mu, DL_CONV_OP_SUB, &diff));
    double total = 0.0, re = 0.0, im = 0.0;
    CHECK(dl_measure_total(diff, &total));
    CHECK(dl_product_fourier(mu, mu, 100.0, &re, &im));
    if (fabs(total - 1.0) > 1e-12 || hypot(re, im) > 1.0) return 2;
    if (dl_measure_uniform(2.0, 1.0, 8, &diff) != DL_STATUS_INVALID_ARGUMENT) return 3;
    if (dl_last_error() == NULL) return 4;
    int64_t cells[] = {0, 3, 4, 9};
    DlSet *s = NULL;
    size_t cover = 0;
    CHECK(dl_set_from_cells(4, cells, 4, &s));
    CHECK(dl_covering_number(s, 0.25, &cover));
    if (cover != 3) return 5;
    dl_set_free(s);
    dl_measure_free(diff);
    dl_measure_free(mu);
    printf("ok %s\n", dl_version());
    return 0;
}
