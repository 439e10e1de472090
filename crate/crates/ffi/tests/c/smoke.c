#include <stdio.h>
#include <stdlib.h>

#include "sbi_forge.h"

int main(void) {
    SbiTask *task = NULL;
    if (sbi_task_new("gaussian_linear", &task) != SBI_STATUS_OK) {
        fprintf(stderr, "task: %s\n", sbi_last_error_message());
        return 1;
    }
    size_t d = 0, xd = 0;
    sbi_task_dims(task, &d, &xd);
    double *theta = malloc(4 * d * sizeof(double));
    double *x = malloc(4 * xd * sizeof(double));
    if (sbi_sample_prior(task, 4, 1, theta) != SBI_STATUS_OK || sbi_simulate(task, theta, 4, 2, x) != SBI_STATUS_OK) {
        fprintf(stderr, "simulate: %s\n", sbi_last_error_message());
        return 1;
    }
    SbiTask *missing = NULL;
    SbiStatus s = sbi_task_new("missing", &missing);
    printf("dims %zu %zu status %d refs %d\n", d, xd, (int)s, SBI_NUM_REFERENCE_OBSERVATIONS);
    free(theta);
    free(x);
    sbi_task_free(task);
    return s == SBI_STATUS_UNKNOWN_TASK && missing == NULL ? 0 : 1;
}
