/* Minimal C consumer of the generated header: exercises configuration,
 * the Wilson interval, the gradient check, and string/error conventions.
 * Compiled and run by the c_program_links_and_runs test. */

#include "peglab.h"

#include <math.h>
#include <stdio.h>
#include <string.h>

static int failures = 0;

#define CHECK(cond)                                                     \
    do {                                                                \
        if (!(cond)) {                                                  \
            fprintf(stderr, "FAIL %s:%d: %s\n", __FILE__, __LINE__, #cond); \
            failures++;                                                 \
        }                                                               \
    } while (0)

int main(void) {
    CHECK(peglab_version() != NULL);
    CHECK(strlen(peglab_version()) > 0);

    PeglabConfig *cfg = peglab_config_default();
    CHECK(cfg != NULL);

    char *digest = peglab_config_digest(cfg);
    CHECK(digest != NULL && strlen(digest) == 16);

    char *text = peglab_config_to_text(cfg);
    CHECK(text != NULL && strstr(text, "episode_len") != NULL);

    PeglabConfig *again = peglab_config_from_text(text);
    CHECK(again != NULL);
    char *digest2 = peglab_config_digest(again);
    CHECK(digest2 != NULL && strcmp(digest, digest2) == 0);

    peglab_string_free(digest);
    peglab_string_free(digest2);
    peglab_string_free(text);
    peglab_config_free(again);
    peglab_config_free(cfg);

    CHECK(peglab_config_from_text("bogus_key = 1") == NULL);
    CHECK(strlen(peglab_last_error()) > 0);

    double lo = -1.0, hi = -1.0;
    CHECK(peglab_wilson_interval(18, 20, 1.96, &lo, &hi) == PEGLAB_STATUS_OK);
    CHECK(lo > 0.68 && lo < 0.70);
    CHECK(hi > 0.97 && hi < 0.99);
    CHECK(peglab_wilson_interval(5, 0, 1.96, &lo, &hi) == PEGLAB_STATUS_INVALID_ARGUMENT);

    double worst = 1.0;
    CHECK(peglab_gradcheck_worst(0, &worst) == PEGLAB_STATUS_OK);
    CHECK(worst < 1e-4);

    CHECK(peglab_env_step(NULL, NULL, NULL) == PEGLAB_STATUS_NULL_POINTER);

    if (failures == 0) {
        printf("c smoke ok\n");
    }
    return failures == 0 ? 0 : 1;
}
