#include <math.h>
#include "bp_core.h"

/* Separate loops so the vectorizer maps cos/sin onto the vector math
 * library instead of fusing them into scalar sincos calls. */
void bp_row_geometry(ptrdiff_t n, double half_pitch_index, double pitch,
                     double bx, double by, double bz,
                     double ux, double uy, double uz,
                     double r0, double inv_dr, double ph0, double k_c,
                     double *restrict t, double *restrict cr, double *restrict ci)
{
#pragma omp simd
    for (ptrdiff_t j = 0; j < n; ++j) {
        double b = ((double)j - half_pitch_index) * pitch;
        double dx = bx + b * ux;
        double dy = by + b * uy;
        double dz = bz + b * uz;
        double R = sqrt(dx * dx + dy * dy + dz * dz) - r0;
        t[j] = R * inv_dr;
        ci[j] = ph0 + k_c * R;
    }
#pragma omp simd
    for (ptrdiff_t j = 0; j < n; ++j)
        cr[j] = cos(ci[j]);
#pragma omp simd
    for (ptrdiff_t j = 0; j < n; ++j)
        ci[j] = sin(ci[j]);
}
