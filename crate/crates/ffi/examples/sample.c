/* Samples response offsets for each act of a latent spec.
 *
 *   cc -I crates/ffi/include crates/ffi/examples/sample.c \
 *      target/release/librtnet_ffi.a -lm -lpthread -ldl -o sample
 *   ./sample model.ckpt latent.tsv
 *
 * The user input is synthetic: 30 frames of speech-like noise followed by
 * 80 frames of silence. */
#include <stdio.h>
#include <stdlib.h>
#include <math.h>

#include "rtnet.h"

#define SPEECH 30
#define FRAMES (SPEECH + 80)

static int check(enum RtnetStatus st, const char *what) {
    if (st != RTNET_STATUS_OK) {
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)st, rtnet_last_error_message());
        return 0;
    }
    return 1;
}

int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: %s MODEL.ckpt LATENT.tsv\n", argv[0]);
        return 1;
    }
    RtnetModel *model = NULL;
    RtnetLatentSpec *spec = NULL;
    if (!check(rtnet_model_load(argv[1], &model), "model load")) return 1;
    if (!check(rtnet_latent_spec_load(argv[2], &spec), "latent spec load")) return 1;

    RtnetModelInfo info;
    check(rtnet_model_info(model, &info), "model info");
    printf("rtnet %s: acoustic_dim %zu, h_z %zu, latent %zu\n", rtnet_version(), info.acoustic_dim,
           info.hz_dim, info.latent_dim);

    float *acoustic = calloc((size_t)FRAMES * info.acoustic_dim, sizeof(float));
    uint32_t *ids = calloc(FRAMES, sizeof(uint32_t));
    float *hz = calloc(info.hz_dim, sizeof(float));
    uint32_t unspec = 0;
    check(rtnet_model_token_id(model, "<UNSPEC>", &unspec), "token id");
    for (size_t t = 0; t < SPEECH; t++) {
        ids[t] = unspec;
        for (size_t k = 0; k < info.acoustic_dim; k++)
            acoustic[t * info.acoustic_dim + k] = (float)sin(0.3 * (double)(t + k));
    }

    for (size_t a = 0; a < rtnet_latent_spec_act_count(spec); a++) {
        const char *act = NULL;
        rtnet_latent_spec_act_name(spec, a, &act);
        if (!check(rtnet_latent_hz(model, spec, act, act, 0.0, hz, info.hz_dim), "latent h_z")) break;
        double mean = 0.0;
        int n = 200;
        for (int i = 0; i < n; i++) {
            RtnetOffset off;
            if (!check(rtnet_sample_offset(model, acoustic, ids, FRAMES, SPEECH - 1, hz, info.hz_dim,
                                           SPEECH - 10, 1, (uint32_t)i, &off),
                       "sample"))
                break;
            mean += off.offset_ms / n;
        }
        printf("%-12s mean offset %.1f ms\n", act, mean);
    }

    free(hz);
    free(ids);
    free(acoustic);
    rtnet_latent_spec_free(spec);
    rtnet_model_free(model);
    return 0;
}
