/*
 * csvish: comma-separated text with RFC4180-style quoting.
 * States: field start, unquoted field, quoted field, quote seen inside quotes.
 */
#include "ff_runtime.h"

enum { START, UNQUOTED, QUOTED, QUOTE_SEEN };

static void end_row(uint32_t fields, int32_t *width, uint32_t *rows) {
    if (*width < 0) {
        FF_BB();
        *width = (int32_t)fields;
    } else if ((int32_t)fields == *width) {
        FF_BB();
    } else if ((int32_t)fields < *width) {
        FF_BB();
    } else {
        FF_BB();
    }
    (*rows)++;
}

static void ff_target(const uint8_t *buf, uint32_t len) {
    FF_BB();
    if (len == 0) { FF_BB(); return; }
    int state = START;
    uint32_t fields = 0, rows = 0, digits = 0;
    int32_t width = -1;
    int stray = 0;
    for (uint32_t i = 0; i < len; i++) {
        uint8_t c = buf[i];
        switch (state) {
        case START:
            if (c == '"') { FF_BB(); state = QUOTED; }
            else if (c == ',') { FF_BB(); fields++; }
            else if (c == '\n') { FF_BB(); end_row(fields + 1, &width, &rows); fields = 0; }
            else if (c == '\r') { FF_BB(); }
            else if (c >= '0' && c <= '9') { FF_BB(); digits++; state = UNQUOTED; }
            else { FF_BB(); state = UNQUOTED; }
            break;
        case UNQUOTED:
            if (c == ',') { FF_BB(); fields++; state = START; }
            else if (c == '\n') { FF_BB(); end_row(fields + 1, &width, &rows); fields = 0; state = START; }
            else if (c == '"') { FF_BB(); stray = 1; }
            else if (c >= '0' && c <= '9') { FF_BB(); digits++; }
            else { FF_BB(); }
            break;
        case QUOTED:
            if (c == '"') { FF_BB(); state = QUOTE_SEEN; }
            else if (c == '\n') { FF_BB(); }
            else if (c == ',') { FF_BB(); }
            else { FF_BB(); }
            break;
        case QUOTE_SEEN:
            if (c == '"') { FF_BB(); state = QUOTED; }
            else if (c == ',') { FF_BB(); fields++; state = START; }
            else if (c == '\n') { FF_BB(); end_row(fields + 1, &width, &rows); fields = 0; state = START; }
            else { FF_BB(); stray = 1; state = UNQUOTED; }
            break;
        }
    }
    if (state == QUOTED) FF_BB();
    else if (state != START || fields > 0) { FF_BB(); end_row(fields + 1, &width, &rows); }
    if (stray) FF_BB();
    if (rows > 8) FF_BB();
    else if (rows > 1) FF_BB();
    if (width > 5) FF_BB();
    if (digits > 16) FF_BB();
}

FF_TARGET_END
