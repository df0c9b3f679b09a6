#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "miglmm.h"

int main(void) {
    double phi = 0.0;
    if (miglmm_phi(0.0, 1.0, &phi) != MIGLMM_STATUS_OK || phi != 0.5) {
        fprintf(stderr, "phi(0, 1) = %g\n", phi);
        return 1;
    }
    double a = 0.0;
    if (miglmm_adjust(MIGLMM_LINK_LOG, 0.3, 2.0, &a) != MIGLMM_STATUS_OK || fabs(a + 1.0) > 1e-15) {
        return 2;
    }
    if (miglmm_adjust(MIGLMM_LINK_SQRT, 1.0, 4.0, &a) != MIGLMM_STATUS_DOMAIN) {
        return 3;
    }
    if (miglmm_last_error_message()[0] == '\0') {
        return 4;
    }
    MiglmmRule *rule = NULL;
    if (miglmm_rule_new(30, &rule) != MIGLMM_STATUS_OK || miglmm_rule_order(rule) != 30) {
        return 5;
    }
    double w[30];
    double total = 0.0;
    miglmm_rule_weights(rule, w, 30);
    for (int i = 0; i < 30; ++i) {
        total += w[i];
    }
    miglmm_rule_free(rule);
    if (fabs(total - sqrt(M_PI)) > 1e-12) {
        return 6;
    }
    printf("ok %s\n", miglmm_version());
    return 0;
}
