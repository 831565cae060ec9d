/*
 * Target-side runtime for the fairfuzz toy targets.
 *
 * A target defines
 *     static void ff_target(const uint8_t *buf, uint32_t len);
 * marks each basic block with FF_BB(), and closes the file with FF_TARGET_END.
 *
 * Build flags:
 *     -DFF_PERSISTENT_BUILD   embed the capability marker and the persistent loop
 *     -DFF_LABEL_SEED=<u32>   seed for the AFL-style random block labels
 */
#ifndef FF_RUNTIME_H
#define FF_RUNTIME_H

#include <errno.h>
#include <fcntl.h>
#include <sched.h>
#include <signal.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <time.h>
#include <unistd.h>

#ifndef FF_LABEL_SEED
#define FF_LABEL_SEED 0u
#endif

#define FF_MAP_SIZE 65536u
#define FF_BLOCK_STRIDE 256u
#define FF_PAYLOAD_CAP (1u << 20)
#define FF_OFF_STATUS 0
#define FF_OFF_EXEC 4
#define FF_OFF_LEN 8
#define FF_OFF_PAYLOAD 16
#define FF_OFF_COVERAGE (FF_OFF_PAYLOAD + FF_PAYLOAD_CAP)
#define FF_CHANNEL_SIZE (FF_OFF_COVERAGE + FF_MAP_SIZE)

enum { FF_UNATTACHED = 0, FF_IDLE = 1, FF_INPUT_READY = 2, FF_RESULT_READY = 3, FF_SHUTDOWN = 4 };
enum { FF_EXEC_OK = 0, FF_EXEC_CRASH = 1, FF_EXEC_HANG = 2 };
enum { FF_SCHEME_XOR = 0, FF_SCHEME_UNIFORM = 1 };

#define FF_EXIT_LAUNCH 111

#ifdef FF_PERSISTENT_BUILD
__attribute__((used)) static const char ff_marker[] = "##SIG_FF_PERSISTENT##";
#endif

static void ff_target(const uint8_t *buf, uint32_t len);
static int ff_nblocks(void);

static uint8_t ff_map[FF_MAP_SIZE];
static int ff_scheme = FF_SCHEME_UNIFORM;
static uint32_t ff_prev_label;
static int32_t ff_prev_block = -1;

static const char *ff_cov_path;
static volatile uint8_t *ff_chan;
static volatile sig_atomic_t ff_in_iteration;

/* Must stay in sync with fairfuzz.coverage.block_label. */
static inline uint32_t ff_label(uint32_t block) {
    uint32_t x = block * 0x9E3779B1u ^ (uint32_t)FF_LABEL_SEED;
    x ^= x >> 16;
    x *= 0x7FEB352Du;
    x ^= x >> 15;
    x *= 0x846CA68Bu;
    x ^= x >> 16;
    return x & (FF_MAP_SIZE - 1);
}

static inline void ff_hit(uint32_t block) {
    uint32_t idx;
    if (ff_scheme == FF_SCHEME_UNIFORM) {
        idx = (uint32_t)(ff_prev_block + 1) * FF_BLOCK_STRIDE + block;
        ff_prev_block = (int32_t)block;
    } else {
        uint32_t cur = ff_label(block);
        idx = (cur ^ (ff_prev_label >> 1)) & (FF_MAP_SIZE - 1);
        ff_prev_label = cur;
    }
    if (ff_map[idx] != 255) ff_map[idx]++;
}

#define FF_BB() ff_hit(__COUNTER__)
#define FF_TARGET_END \
    static int ff_nblocks(void) { return __COUNTER__; }

static void ff_reset(void) {
    memset(ff_map, 0, sizeof(ff_map));
    ff_prev_label = 0;
    ff_prev_block = -1;
}

static void ff_put_u32(uint8_t *p, uint32_t v) {
    p[0] = v & 0xff;
    p[1] = (v >> 8) & 0xff;
    p[2] = (v >> 16) & 0xff;
    p[3] = (v >> 24) & 0xff;
}

/* async-signal-safe: only open/write/close */
static void ff_write_cov_file(void) {
    if (!ff_cov_path) return;
    uint8_t hdr[13];
    memcpy(hdr, "FFCOVMAP", 8);
    hdr[8] = (uint8_t)ff_scheme;
    ff_put_u32(hdr + 9, FF_MAP_SIZE);
    int fd = open(ff_cov_path, O_WRONLY | O_CREAT | O_TRUNC, 0600);
    if (fd < 0) return;
    ssize_t r = write(fd, hdr, sizeof(hdr));
    size_t off = 0;
    while (r >= 0 && off < FF_MAP_SIZE) {
        r = write(fd, ff_map + off, FF_MAP_SIZE - off);
        if (r > 0) off += (size_t)r;
    }
    close(fd);
}

static void ff_publish(uint32_t exec_status) {
    memcpy((uint8_t *)ff_chan + FF_OFF_COVERAGE, ff_map, FF_MAP_SIZE);
    __atomic_store_n((uint32_t *)(ff_chan + FF_OFF_EXEC), exec_status, __ATOMIC_RELAXED);
    __atomic_store_n((uint32_t *)(ff_chan + FF_OFF_STATUS), (uint32_t)FF_RESULT_READY, __ATOMIC_RELEASE);
}

static void ff_on_crash(int sig) {
    if (ff_chan) {
        if (ff_in_iteration) ff_publish(FF_EXEC_CRASH);
    } else {
        ff_write_cov_file();
    }
    signal(sig, SIG_DFL);
    raise(sig);
}

/* The executor sends SIGUSR1 when an execution exceeds the hang threshold. */
static void ff_on_hang(int sig) {
    (void)sig;
    if (ff_chan) {
        if (ff_in_iteration) ff_publish(FF_EXEC_HANG);
    } else {
        ff_write_cov_file();
    }
    _exit(0);
}

static void ff_install_handlers(void) {
    static const int crash_sigs[] = {SIGABRT, SIGSEGV, SIGBUS, SIGFPE, SIGILL};
    for (size_t i = 0; i < sizeof(crash_sigs) / sizeof(crash_sigs[0]); i++)
        signal(crash_sigs[i], ff_on_crash);
    signal(SIGUSR1, ff_on_hang);
}

static void ff_count_spawn(void) {
    const char *path = getenv("FF_SPAWN_COUNTER");
    if (!path) return;
    int fd = open(path, O_WRONLY | O_CREAT | O_APPEND, 0600);
    if (fd < 0) return;
    if (write(fd, "s", 1) < 0) { /* best effort */ }
    close(fd);
}

static int ff_run_once(const char *path) {
    if (!path) return FF_EXIT_LAUNCH;
    FILE *f = fopen(path, "rb");
    if (!f) return FF_EXIT_LAUNCH;
    uint8_t *buf = NULL;
    size_t len = 0, cap = 0;
    for (;;) {
        if (len == cap) {
            cap = cap ? cap * 2 : 4096;
            uint8_t *nb = realloc(buf, cap);
            if (!nb) { fclose(f); free(buf); return FF_EXIT_LAUNCH; }
            buf = nb;
        }
        size_t n = fread(buf + len, 1, cap - len, f);
        if (n == 0) break;
        len += n;
    }
    fclose(f);
    ff_reset();
    ff_target(buf, (uint32_t)len);
    ff_write_cov_file();
    free(buf);
    return 0;
}

#ifdef FF_PERSISTENT_BUILD
static uint32_t ff_await_input(volatile uint32_t *status, pid_t parent) {
    unsigned long spins = 0;
    struct timespec nap = {0, 20000};
    for (;;) {
        uint32_t s = __atomic_load_n(status, __ATOMIC_ACQUIRE);
        if (s == FF_INPUT_READY || s == FF_SHUTDOWN) return s;
        if (spins < 256) {
            sched_yield();
        } else {
            nanosleep(&nap, NULL);
            if ((spins & 1023) == 0 && getppid() != parent) return FF_SHUTDOWN;
        }
        spins++;
    }
}

static int ff_persistent_loop(const char *shm_path, unsigned long max_iters) {
    int fd = open(shm_path, O_RDWR);
    if (fd < 0) return FF_EXIT_LAUNCH;
    void *base = mmap(NULL, FF_CHANNEL_SIZE, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
    close(fd);
    if (base == MAP_FAILED) return FF_EXIT_LAUNCH;
    ff_chan = (volatile uint8_t *)base;
    volatile uint32_t *status = (volatile uint32_t *)(ff_chan + FF_OFF_STATUS);
    pid_t parent = getppid();
    __atomic_store_n((uint32_t *)status, (uint32_t)FF_IDLE, __ATOMIC_RELEASE);

    unsigned long iters = 0;
    while (max_iters == 0 || iters < max_iters) {
        if (ff_await_input(status, parent) == FF_SHUTDOWN) break;
        uint32_t len = __atomic_load_n((uint32_t *)(ff_chan + FF_OFF_LEN), __ATOMIC_RELAXED);
        if (len > FF_PAYLOAD_CAP) len = FF_PAYLOAD_CAP;
        ff_reset();
        ff_in_iteration = 1;
        ff_target((const uint8_t *)ff_chan + FF_OFF_PAYLOAD, len);
        ff_in_iteration = 0;
        ff_publish(FF_EXEC_OK);
        iters++;
    }
    return 0;
}
#endif

int main(int argc, char **argv) {
    if (argc > 1 && strcmp(argv[1], "--ff-blocks") == 0) {
        printf("%d\n", ff_nblocks());
        return 0;
    }
    ff_count_spawn();
    const char *scheme = getenv("FF_COV_SCHEME");
    if (scheme && strcmp(scheme, "xor") == 0) ff_scheme = FF_SCHEME_XOR;
    ff_cov_path = getenv("FF_COV_FILE");
    ff_install_handlers();
#ifdef FF_PERSISTENT_BUILD
    const char *handshake = getenv("FF_PERSISTENT");
    const char *shm_id = getenv("FF_SHM_ID");
    if (handshake && strcmp(handshake, "1") == 0 && shm_id) {
        const char *cap = getenv("FF_MAX_ITERS");
        return ff_persistent_loop(shm_id, cap ? strtoul(cap, NULL, 10) : 0);
    }
#endif
    /* no handshake: run the body once and exit */
    return ff_run_once(argc > 1 ? argv[1] : NULL);
}

#endif
