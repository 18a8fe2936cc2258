#include <math.h>
#include <stdio.h>
#include "ionlattice.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "failed: %s (line %d)\n", #cond, __LINE__); return 1; } } while (0)

int main(void) {
    double period = 0.0;
    CHECK(il_lattice_period(397e-9, 2.0 * asin(397.0 / 520.0), &period) == IL_STATUS_OK);
    CHECK(fabs(period - 260e-9) < 1e-15);

    CHECK(il_lattice_period(397e-9, -1.0, &period) == IL_STATUS_INVALID_ARGUMENT);
    char msg[256];
    CHECK(il_last_error_message(msg, sizeof msg) == IL_STATUS_OK);
    CHECK(il_last_error_length() > 0);

    IlLockTrace *trace = NULL;
    CHECK(il_lock_run("{\"schema_version\": 1, \"seed\": 9}", 30.0, &trace) == IL_STATUS_OK);
    CHECK(il_lock_trace_len(trace) == 60);
    double rms = 0.0;
    size_t lost = 1;
    CHECK(il_lock_trace_stats(trace, &rms, &lost) == IL_STATUS_OK);
    CHECK(rms > 0.0 && rms < 0.5 && lost == 0);
    il_lock_trace_free(trace);

    CHECK(il_lock_run("{\"schema_version\": 1}", 0.0, &trace) == IL_STATUS_CONFIG);
    CHECK(trace == NULL);

    const double c[5] = {8e-6, 0.0, 0.0, 0.0, 0.0};
    IlPolynomialMap *map = NULL;
    CHECK(il_map_new(c, &map) == IL_STATUS_OK);
    double z = 0.0;
    CHECK(il_map_evaluate(map, 2.0, &z) == IL_STATUS_OK);
    CHECK(fabs(z - 16e-6) < 1e-18);
    il_map_free(map);

    puts("ok");
    return 0;
}
