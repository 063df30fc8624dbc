/* C interface to cqed-chip. All quantities are SI unless the name says otherwise. */
#ifndef CQED_CHIP_H
#define CQED_CHIP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* 2, 3 and 4 match the command-line exit codes. */
typedef enum CqedStatus {
    CQED_OK = 0,
    CQED_ERR_NULL_ARGUMENT = 1,
    CQED_ERR_INVALID_INPUT = 2,
    CQED_ERR_INSUFFICIENT_DATA = 3,
    CQED_ERR_NUMERICAL = 4,
    CQED_ERR_PANIC = 5
} CqedStatus;

typedef enum CqedTraceColumn {
    CQED_COLUMN_TIME_S = 0,
    CQED_COLUMN_OFFSET_HZ = 1,
    CQED_COLUMN_PZT_V = 2,
    CQED_COLUMN_HEATER_W = 3,
    CQED_COLUMN_RTD_K = 4,
    CQED_COLUMN_TRANSMISSION = 5
} CqedTraceColumn;

typedef struct CqedCavitySpec {
    double length_m;
    double curved_mirror_roc_m;
    double wavelength_m;
    double aperture_radius_m;
    double loss_chip;
    double loss_curved;
} CqedCavitySpec;

typedef struct CqedCavityDerived {
    double waist_m;
    double diffraction_loss;
    double round_trip_loss;
    double finesse;
    double fsr_hz;
    double linewidth_hz;
    double cooperativity;
    double displacement_per_linewidth_m;
} CqedCavityDerived;

typedef struct CqedRadiusFit {
    double aperture_radius_m;
    double fixed_loss;
    double chi_squared;
    uint64_t iterations;
    bool converged;
} CqedRadiusFit;

typedef struct CqedWire {
    double x_m;
    double z_m;
    double current_a;
} CqedWire;

typedef struct CqedFieldGradient {
    double field_t[3];            /* Bx, By, Bz */
    double gradient_t_per_m[4];   /* d(Bx,Bz)/d(x,z), row-major */
    double magnitude_t;
    double transverse_gradient_t_per_m;
} CqedFieldGradient;

typedef struct CqedTraceSummary {
    double peak_abs_offset_hz;
    double peak_time_s;
    double linewidth_hz;
    double time_above_linewidth_s;
    double longest_above_linewidth_s;
    double settling_time_s;
    double rms_after_settling_hz;
    double unsampled_peak_abs_offset_hz;
} CqedTraceSummary;

typedef struct CqedScenario CqedScenario;
typedef struct CqedTrace CqedTrace;

/* Message for the last failure on the calling thread, or NULL. */
const char *cqed_last_error(void);
const char *cqed_version(void);
void cqed_string_free(char *s);

CqedStatus cqed_cavity_default(CqedCavitySpec *out);
CqedStatus cqed_cavity_derive(const CqedCavitySpec *spec, CqedCavityDerived *out);

/* sigma and residuals may be NULL. */
CqedStatus cqed_fit_radius(const double *length_m, const double *finesse, const double *sigma, size_t n,
                           double roc_m, double wavelength_m, CqedRadiusFit *out, double *residuals);

/* bias_t may be NULL. */
CqedStatus cqed_wire_field(const CqedWire *wires, size_t n_wires, const double *bias_t, double x_m, double z_m,
                           CqedFieldGradient *out);

CqedStatus cqed_scenario_parse(const char *toml, CqedScenario **out);
CqedStatus cqed_scenario_load(const char *path, CqedScenario **out);
/* Result must be released with cqed_string_free. */
CqedStatus cqed_scenario_to_toml(const CqedScenario *s, char **out);
CqedStatus cqed_scenario_run(const CqedScenario *s, CqedTrace **out);
void cqed_scenario_free(CqedScenario *s);

size_t cqed_trace_len(const CqedTrace *t);
/* *data is owned by the trace. column is a CqedTraceColumn. */
CqedStatus cqed_trace_column(const CqedTrace *t, uint32_t column, const double **data, size_t *len);
CqedStatus cqed_trace_summary(const CqedTrace *t, CqedTraceSummary *out);
void cqed_trace_free(CqedTrace *t);

#ifdef __cplusplus
}
#endif

#endif
