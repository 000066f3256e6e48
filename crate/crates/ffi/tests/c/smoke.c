#include <stdio.h>
#include <string.h>

#include "dsal.h"

/* Two well separated classes in the base phase, one more added later. */
static void fill(double *x, uint32_t *y, size_t n, uint32_t label, double center) {
    for (size_t i = 0; i < n; i++) {
        for (size_t j = 0; j < 4; j++) {
            x[i * 4 + j] = (j == label % 4 ? center : 0.0) + 0.01 * (double)((i * 7 + j * 3) % 5);
        }
        y[i] = label;
    }
}

int main(void) {
    double x[30 * 4];
    uint32_t y[30];
    fill(x, y, 10, 0, 3.0);
    fill(x + 40, y + 10, 10, 1, 3.0);

    DsalConfig cfg = dsal_config_default();
    cfg.buffer_dim = 32;
    uint32_t base[] = {0, 1};
    DsalLearner *learner = NULL;
    DsalStatus s = dsal_learner_new(&cfg, x, 20, 4, y, base, 2, &learner);
    if (s != DSAL_STATUS_OK) {
        fprintf(stderr, "new: %s\n", dsal_last_error_message());
        return 1;
    }

    fill(x + 80, y + 20, 10, 2, 3.0);
    uint32_t next[] = {2};
    s = dsal_learner_learn_phase(learner, x + 80, 10, 4, y + 20, next, 1);
    if (s != DSAL_STATUS_OK) {
        fprintf(stderr, "learn: %s\n", dsal_last_error_message());
        return 1;
    }

    uint32_t pred[30];
    s = dsal_learner_classify(learner, x, 30, 4, pred, 30);
    size_t correct = 0;
    for (size_t i = 0; i < 30; i++) {
        correct += pred[i] == y[i];
    }

    s = dsal_learner_learn_phase(learner, x, 10, 4, y, base, 1);
    int overlap = s == DSAL_STATUS_CLASS_OVERLAP && strstr(dsal_last_error_message(), "overlap") != NULL;

    printf("classes=%zu correct=%zu/30 overlap_rejected=%d\n", dsal_learner_num_classes(learner), correct, overlap);
    dsal_learner_free(learner);
    return correct == 30 && overlap ? 0 : 1;
}
