#ifndef SAR_ATR_BP_CORE_H
#define SAR_ATR_BP_CORE_H
#include <stddef.h>

/* Fills t (fractional profile index), cr/ci (carrier) for one image row. */
void bp_row_geometry(ptrdiff_t n, double half_pitch_index, double pitch,
                     double bx, double by, double bz,
                     double ux, double uy, double uz,
                     double r0, double inv_dr, double ph0, double k_c,
                     double *t, double *cr, double *ci);

#endif
