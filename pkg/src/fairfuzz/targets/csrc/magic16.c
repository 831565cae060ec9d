/*
 * magic16: sixteen "magic" fields, each the sum of four scattered bytes.
 *
 * Field g sums the bytes at 128*j + 8*g + 3 (j = 0..3), so the four bytes
 * of one field sit 128 bytes apart; inputs need at least 1024 bytes and the
 * tail past the fields is ignored.
 * Every field climbs a ladder of sum thresholds; the last rung needs all four
 * bytes at 0xff.  Moving several far-apart bytes together is what a gradient
 * points at and what random byte edits rarely do.
 */
#include "ff_runtime.h"

#define FIELD_POS(g, j) (128u * (j) + 8u * (g) + 3u)
#define MIN_LEN 1024u

#define FIELD(g)                                                          \
    do {                                                                  \
        unsigned s = buf[FIELD_POS(g, 0)] + buf[FIELD_POS(g, 1)] +        \
                     buf[FIELD_POS(g, 2)] + buf[FIELD_POS(g, 3)];         \
        FF_BB();                                                          \
        if (s >= 1) { FF_BB();                                            \
        if (s >= 256) { FF_BB();                                          \
        if (s >= 512) { FF_BB();                                          \
        if (s >= 768) { FF_BB();                                          \
        if (s >= 896) { FF_BB();                                          \
        if (s >= 960) { FF_BB();                                          \
        if (s >= 992) { FF_BB();                                          \
        if (s >= 1008) { FF_BB();                                         \
        if (s >= 1016) { FF_BB();                                         \
        if (s == 1020) { FF_BB(); }}}}}}}}}}                              \
    } while (0)

static void ff_target(const uint8_t *buf, uint32_t len) {
    FF_BB();
    if (len < MIN_LEN) { FF_BB(); return; }
    FIELD(0);
    FIELD(1);
    FIELD(2);
    FIELD(3);
    FIELD(4);
    FIELD(5);
    FIELD(6);
    FIELD(7);
    FIELD(8);
    FIELD(9);
    FIELD(10);
    FIELD(11);
    FIELD(12);
    FIELD(13);
    FIELD(14);
    FIELD(15);
    FF_BB();
}

FF_TARGET_END
