#include <math.h>
#include <stdio.h>
#include "freqmux.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "failed: %s\n", #cond); return 1; } } while (0)

int main(void) {
    double v = 0.0;
    CHECK(fm_hom_visibility(0.84, 0.14, &v) == FM_STATUS_OK);
    CHECK(fabs(v - 0.7224) < 1e-12);
    CHECK(fm_hom_visibility(2.0, 0.14, &v) == FM_STATUS_INVALID_ARGUMENT);
    CHECK(fm_last_error() != NULL);

    FmShifter *shifter = NULL;
    CHECK(fm_shifter_new(3.0, 8e9, 85e9, 5.3e-12, &shifter) == FM_STATUS_OK);
    double shift = 0.0;
    CHECK(fm_shift(shifter, 0.0, &shift) == FM_STATUS_OK && shift == 0.0);
    CHECK(fm_shift(shifter, 100.0, &shift) == FM_STATUS_OUT_OF_RANGE);
    fm_shifter_free(shifter);

    FmConfig *config = NULL;
    CHECK(fm_config_from_toml("seed = 9\n[stream]\npulses = 1000\n", &config) == FM_STATUS_OK);
    FmStateModel *model = NULL;
    CHECK(fm_state_model_new(config, 0.0, true, 0.0, &model) == FM_STATUS_OK);
    double purity = 0.0;
    CHECK(fm_purity(model, &purity) == FM_STATUS_OK);
    CHECK(fabs(purity - 1.0) < 1e-6);
    fm_state_model_free(model);
    fm_config_free(config);
    printf("ok %s\n", fm_version());
    return 0;
}
