/* Minimal C client: simulate, correlate, fit. */
#include <stdio.h>
#include "fringecorr.h"

int main(void) {
    FcPerturbation *tone = NULL;
    FcEventSet *events = NULL;
    FcGrid *grid = NULL;
    FcFringeFit fit;

    if (fc_perturbation_parse("50:0.4pi:0", &tone) != FC_STATUS_OK ||
        fc_simulate(0.6, 2.0, tone, 20000, 2000.0, 20.0, 3, &events) != FC_STATUS_OK ||
        fc_correlate(events, 0.5, 1e-3, 0.2, 4.0, 0, &grid) != FC_STATUS_OK ||
        fc_grid_fit_fringe(grid, &fit) != FC_STATUS_OK) {
        fprintf(stderr, "error: %s\n", fc_last_error_message());
        return 1;
    }
    printf("fringecorr %s: %zu events, contrast_g2 = %.4f, period = %.4f mm\n", fc_version(),
           fc_events_len(events), fit.contrast_g2, fit.period_g2);

    fc_grid_free(grid);
    fc_events_free(events);
    fc_perturbation_free(tone);
    return 0;
}
