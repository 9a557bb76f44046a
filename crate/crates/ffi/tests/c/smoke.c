#include <math.h>
#include <stdio.h>
#include <string.h>

#include "mrcast.h"

int main(void) {
    const char *config =
        "{\"context_len\": 32, \"input_patch_len\": 8, \"output_patch_len\": 8,"
        " \"model_dim\": 8, \"num_layers\": 1, \"num_heads\": 2}";
    MrcastModel *model = NULL;
    if (mrcast_model_init(config, 1, &model) != MRCAST_STATUS_OK) {
        fprintf(stderr, "init: %s\n", mrcast_last_error());
        return 1;
    }
    double coarse[32], fine[32];
    uint8_t coarse_mask[32], fine_mask[32];
    for (int i = 0; i < 32; i++) {
        coarse[i] = 2.0 + sin(0.2 * i);
        fine[i] = 2.0 + cos(0.4 * i);
        coarse_mask[i] = i < 4;
        fine_mask[i] = 0;
    }
    MrcastWindow window = {coarse, coarse_mask, fine, fine_mask, 32, 4};
    double mean[8], quantiles[9 * 8];
    if (mrcast_forecast(model, &window, 1, mean, quantiles, 8) != MRCAST_STATUS_OK) {
        fprintf(stderr, "forecast: %s\n", mrcast_last_error());
        return 1;
    }
    for (int t = 0; t < 8; t++) {
        if (!isfinite(mean[t])) return 1;
    }
    if (mrcast_forecast(model, NULL, 1, mean, quantiles, 8) != MRCAST_STATUS_NULL_POINTER) return 1;
    mrcast_model_free(model);
    printf("ok %s %.6f\n", mrcast_version(), mean[0]);
    return 0;
}
