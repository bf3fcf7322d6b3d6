/* Runs a bundled scenario and prints its final row and metrics.
 *
 *   cc run_preset.c -Iinclude -Ltarget/release -l:libesc_ffi.a -lpthread -ldl -lm
 *   ./a.out known_objective sim_known_objective
 */
#include <stdio.h>

#include "esc_ffi.h"

int main(int argc, char **argv) {
    const char *preset = argc > 1 ? argv[1] : "known_objective";
    const char *name = argc > 2 ? argv[2] : "sim_known_objective";

    EscConfig *cfg = NULL;
    if (esc_config_from_preset(preset, &cfg) != ESC_STATUS_OK) {
        fprintf(stderr, "config: %s\n", esc_last_error());
        return 1;
    }
    EscRecord *rec = NULL;
    EscStatus st = esc_run(cfg, name, &rec);
    if (st != ESC_STATUS_OK) {
        fprintf(stderr, "run: %s\n", esc_last_error());
    }
    if (rec == NULL) {
        esc_config_free(cfg);
        return (int)st;
    }

    size_t n = esc_record_len(rec);
    double row[ESC_COLUMNS];
    if (n > 0 && esc_record_row(rec, n - 1, row, ESC_COLUMNS) == ESC_STATUS_OK) {
        printf("rows %zu\n", n);
        for (size_t i = 0; i < 5; i++) {
            printf("%s %.6f\n", esc_column_name(i), row[i]);
        }
    }
    char *json = NULL;
    if (esc_record_metrics_json(rec, &json) == ESC_STATUS_OK) {
        printf("%s\n", json);
        esc_string_free(json);
    }
    esc_record_free(rec);
    esc_config_free(cfg);
    return (int)st;
}
