#include <stdio.h>
#include "cadeval.h"

int main(void) {
    CadevalCaseSet *cases = NULL;
    if (cadeval_cases_new(&cases) != CADEVAL_STATUS_OK) return 1;
    const double scores[] = {0.9, 0.8, 0.7, 0.2, 0.6, 0.1};
    for (int i = 0; i < 6; i++) cadeval_cases_push(cases, scores[i], i % 2 == 0);

    CadevalInterval auc;
    CadevalStatus st = cadeval_cases_auc_bootstrap(cases, 1000, 95.0, 0, &auc);
    if (st != CADEVAL_STATUS_OK) {
        fprintf(stderr, "error %d: %s\n", st, cadeval_last_error());
        return 1;
    }
    printf("cadeval %s: AUC %.4f [%.4f, %.4f]\n", cadeval_version(), auc.estimate, auc.lo, auc.hi);

    CadevalCaseSet *empty = NULL;
    cadeval_cases_new(&empty);
    double v;
    st = cadeval_cases_auc(empty, &v);
    printf("empty set: status %d (%s)\n", st, cadeval_last_error());

    cadeval_cases_free(empty);
    cadeval_cases_free(cases);
    return 0;
}
