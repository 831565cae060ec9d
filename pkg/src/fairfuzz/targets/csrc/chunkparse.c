/*
 * chunkparse: binary chunk container.
 *
 *   "CHNK" magic, then chunks of [type:u8][len:u8][len bytes].
 *   0x01 header, 0x02 text, 0x03 nested container (depth <= 3),
 *   0x04 checksum, 0x05 u16 numbers,
 *   0xFE + "HANG" -> planted infinite loop, 0xFF -> planted abort.
 *   Inputs shorter than 4 bytes take the short-input branch.
 */
#include "ff_runtime.h"

static uint8_t running_sum;

static void parse_header(const uint8_t *d, uint32_t n) {
    if (n < 2) { FF_BB(); return; }
    if (d[0] == 1) {
        FF_BB();
    } else if (d[0] == 2) {
        FF_BB();
    } else {
        FF_BB();
    }
    if (d[1] & 0x80) FF_BB();
    if (d[1] & 0x01) FF_BB();
}

static void parse_text(const uint8_t *d, uint32_t n) {
    if (n == 0) { FF_BB(); return; }
    uint32_t printable = 0, newlines = 0;
    for (uint32_t i = 0; i < n; i++) {
        if (d[i] == '\n') newlines++;
        else if (d[i] >= 0x20 && d[i] < 0x7f) printable++;
    }
    if (printable == n) FF_BB();
    else if (printable + newlines == n) FF_BB();
    else FF_BB();
    if (newlines > 1) FF_BB();
}

static void parse_numbers(const uint8_t *d, uint32_t n) {
    if (n % 2) FF_BB();
    for (uint32_t i = 0; i + 1 < n; i += 2) {
        uint32_t v = (uint32_t)d[i] | ((uint32_t)d[i + 1] << 8);
        if (v < 100) FF_BB();
        else if (v < 1000) FF_BB();
        else if (v == 0xffff) FF_BB();
        else FF_BB();
    }
}

static uint32_t parse_chunks(const uint8_t *buf, uint32_t len, int depth) {
    uint32_t pos = 0, chunks = 0;
    while (pos < len) {
        if (pos + 2 > len) { FF_BB(); break; }
        uint8_t type = buf[pos];
        uint32_t clen = buf[pos + 1];
        pos += 2;
        if (pos + clen > len) { FF_BB(); break; }
        const uint8_t *d = buf + pos;
        switch (type) {
        case 0x01:
            FF_BB();
            parse_header(d, clen);
            break;
        case 0x02:
            FF_BB();
            parse_text(d, clen);
            break;
        case 0x03:
            if (depth >= 3) { FF_BB(); break; }
            if (depth == 0) FF_BB();
            else if (depth == 1) FF_BB();
            else FF_BB();
            if (parse_chunks(d, clen, depth + 1) == 0) FF_BB();
            break;
        case 0x04:
            if (clen != 1) { FF_BB(); break; }
            if (d[0] == running_sum) FF_BB();
            else FF_BB();
            break;
        case 0x05:
            FF_BB();
            parse_numbers(d, clen);
            break;
        case 0xFE:
            if (clen >= 4 && memcmp(d, "HANG", 4) == 0) {
                for (;;) FF_BB();
            }
            FF_BB();
            break;
        case 0xFF:
            FF_BB();
            abort();
        default:
            FF_BB();
            break;
        }
        for (uint32_t i = 0; i < clen; i++) running_sum += d[i];
        pos += clen;
        chunks++;
    }
    return chunks;
}

static void ff_target(const uint8_t *buf, uint32_t len) {
    FF_BB();
    running_sum = 0;
    if (len < 4) {
        FF_BB();
        if (len == 0) return;
        if (buf[0] == 'C') FF_BB();
        return;
    }
    if (buf[0] != 'C') { FF_BB(); return; }
    if (buf[1] != 'H') { FF_BB(); return; }
    if (buf[2] != 'N') { FF_BB(); return; }
    if (buf[3] != 'K') { FF_BB(); return; }
    FF_BB();
    uint32_t chunks = parse_chunks(buf + 4, len - 4, 0);
    if (chunks == 0) FF_BB();
    else if (chunks == 1) FF_BB();
    else if (chunks > 4) FF_BB();
    else FF_BB();
}

FF_TARGET_END
