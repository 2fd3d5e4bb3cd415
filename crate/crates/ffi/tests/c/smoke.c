#include <math.h>
#include <stdio.h>

#include "featprop.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        FpStatus s_ = (call);                                              \
        if (s_ != FP_STATUS_OK) {                                          \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,              \
                    fp_last_error() ? fp_last_error() : "(none)");         \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    const size_t users[] = {0, 0, 1, 1};
    const size_t items[] = {0, 1, 1, 2};
    const uint8_t known[] = {1, 0, 1};
    double features[] = {1.0, 0.0, 3.0};
    double out[3];
    FpInteractions *r = NULL;
    FpGraph *g = NULL;
    FpMask *m = NULL;
    FpPropagationConfig cfg = fp_propagation_config_default();
    FpPropagationReport report;

    CHECK(fp_interactions_new(2, 3, users, items, 4, &r));
    CHECK(fp_graph_build(r, 20, true, &g));
    CHECK(fp_mask_new(known, 3, &m));
    CHECK(fp_featprop(g, m, features, 3, 1, &cfg, out, &report));

    if (fabs(out[1] - 4.0 / sqrt(2.0)) > 1e-12 || report.num_unreachable != 0) {
        fprintf(stderr, "unexpected value %f\n", out[1]);
        return 1;
    }
    if (fp_mask_sample(10, 2.0, 0, &m) != FP_STATUS_PARAMETER || fp_last_error() == NULL) {
        return 1;
    }
    printf("featprop %s ok %.6f\n", fp_version(), out[1]);
    fp_mask_free(m);
    fp_graph_free(g);
    fp_interactions_free(r);
    return 0;
}
