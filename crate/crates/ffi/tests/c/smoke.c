#include <math.h>
#include <stdio.h>
#include <string.h>

#include "contract_sa.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "check failed line %d: %s\n", __LINE__, #cond); \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    CsaNorm *c = NULL, *s = NULL;
    CHECK(csa_norm_lp(2.0, &c) == CSA_STATUS_OK);
    CHECK(csa_norm_lp(2.0, &s) == CSA_STATUS_OK);

    CsaEnvelope *env = NULL;
    CHECK(csa_envelope_new(c, s, 1.0, &env) == CSA_STATUS_OK);
    double x[2] = {3.0, -4.0};
    double value = 0.0, residual = -1.0, grad[2];
    CHECK(csa_envelope_evaluate(env, x, 2, 0.0, &value, &residual) == CSA_STATUS_OK);
    CHECK(fabs(value - 6.25) < 1e-9);
    CHECK(residual >= 0.0);
    CHECK(csa_envelope_gradient(env, x, 2, 0.0, grad) == CSA_STATUS_OK);
    CHECK(fabs(grad[0] - 1.5) < 1e-6 && fabs(grad[1] + 2.0) < 1e-6);

    CsaNorm *bad = NULL;
    CHECK(csa_norm_lp(0.5, &bad) == CSA_STATUS_INVALID_ARGUMENT);
    CHECK(bad == NULL);
    char msg[256];
    size_t need = csa_last_error_message(msg, sizeof msg);
    CHECK(need > 1 && strlen(msg) == need - 1);

    CsaMdp *mdp = NULL;
    CHECK(csa_mdp_random(4, 2, 0.9, 7, &mdp) == CSA_STATUS_OK);
    CHECK(csa_mdp_n_states(mdp) == 4 && csa_mdp_n_actions(mdp) == 2);
    double q[8];
    CHECK(csa_mdp_q_star(mdp, q, 8) == CSA_STATUS_OK);
    CHECK(csa_mdp_q_star(mdp, q, 7) == CSA_STATUS_DIMENSION_MISMATCH);

    csa_mdp_free(mdp);
    csa_envelope_free(env);
    csa_norm_free(c);
    csa_norm_free(s);
    csa_norm_free(NULL);
    puts("ok");
    return 0;
}
