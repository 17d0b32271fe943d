#ifndef UVP_H
#define UVP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UvpKernel {
  UvpKernel_Matmul = 0,
  UvpKernel_Fft = 1,
  UvpKernel_Redsum = 2,
} UvpKernel;

typedef enum UvpStatus {
  UvpStatus_Ok = 0,
  UvpStatus_NullPointer = 1,
  UvpStatus_InvalidUtf8 = 2,
  UvpStatus_InvalidConfig = 3,
  UvpStatus_Assemble = 4,
  UvpStatus_Execute = 5,
  UvpStatus_MemoryFault = 6,
  UvpStatus_BufferTooSmall = 7,
  UvpStatus_Kernel = 8,
} UvpStatus;

/**
 * Opaque machine state.
 */
typedef struct UvpMachine UvpMachine;

/**
 * Opaque assembled program.
 */
typedef struct UvpProgram UvpProgram;

/**
 * Machine parameters mirrored from the core configuration.
 */
typedef struct UvpConfig {
  uint32_t n_lane;
  uint32_t vrf_depth;
  uint32_t vlen_bits;
  uint32_t mem_latency_cycles;
  uint32_t n_id;
  uint32_t lane_word_bits;
  uint64_t mem_bytes;
} UvpConfig;

/**
 * Summary of one program or kernel run.
 */
typedef struct UvpStats {
  uint64_t cycles;
  uint64_t instructions;
  uint64_t arithmetic;
  uint64_t configuration;
  uint64_t mem;
  uint64_t spill_fill;
  uint64_t scalar;
} UvpStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a NUL-terminated
 * string. Returns the full message length without the terminator.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
uintptr_t uvp_last_error(char *buf, uintptr_t len);

/**
 * Fills `out` with the default machine parameters.
 *
 * # Safety
 * `out` must point to writable memory for one `UvpConfig`.
 */
enum UvpStatus uvp_config_default(struct UvpConfig *out);

/**
 * # Safety
 * `cfg` must be readable and `out` writable.
 */
enum UvpStatus uvp_machine_new(const struct UvpConfig *cfg, struct UvpMachine **out);

/**
 * # Safety
 * `m` must come from `uvp_machine_new` and not be used afterwards.
 */
void uvp_machine_free(struct UvpMachine *m);

/**
 * # Safety
 * `m` must be a live machine and `data` readable for `len` bytes.
 */
enum UvpStatus uvp_machine_write_mem(struct UvpMachine *m,
                                     uint64_t addr,
                                     const uint8_t *data,
                                     uintptr_t len);

/**
 * # Safety
 * `m` must be a live machine and `out` writable for `len` bytes.
 */
enum UvpStatus uvp_machine_read_mem(const struct UvpMachine *m,
                                    uint64_t addr,
                                    uint8_t *out,
                                    uintptr_t len);

/**
 * Reads scalar register `r` (x0..x31).
 *
 * # Safety
 * `m` must be a live machine and `out` writable.
 */
enum UvpStatus uvp_machine_xreg(const struct UvpMachine *m, uint8_t r, uint32_t *out);

/**
 * # Safety
 * `m` must be a live machine.
 */
enum UvpStatus uvp_machine_set_xreg(struct UvpMachine *m, uint8_t r, uint32_t v);

/**
 * Assembles UVP assembly text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum UvpStatus uvp_program_assemble(const char *text, struct UvpProgram **out);

/**
 * # Safety
 * `p` must come from `uvp_program_assemble` and not be used afterwards.
 */
void uvp_program_free(struct UvpProgram *p);

/**
 * Runs `p` on `m` with the pipelined schedule.
 *
 * # Safety
 * `m` and `p` must be live handles; `stats` may be null.
 */
enum UvpStatus uvp_machine_run(struct UvpMachine *m,
                               const struct UvpProgram *p,
                               struct UvpStats *stats);

/**
 * Runs a benchmark kernel on UVP (`cfg`) and on the baseline with
 * `n_lane / lane_ratio` lanes. `b` and `c` are only read for matmul.
 * The baseline runs with the fastest register grouping.
 *
 * # Safety
 * `cfg` must be readable; `uvp` and `baseline` may be null.
 */
enum UvpStatus uvp_kernel_compare(const struct UvpConfig *cfg,
                                  uint32_t lane_ratio,
                                  enum UvpKernel kernel,
                                  uint32_t a,
                                  uint32_t b,
                                  uint32_t c,
                                  uint64_t seed,
                                  struct UvpStats *uvp,
                                  struct UvpStats *baseline);

/**
 * Runs a kernel on UVP and writes its JSON report, NUL-terminated, into `buf`.
 * `written` receives the report length; if the buffer is too small nothing is
 * copied and `BufferTooSmall` is returned.
 *
 * # Safety
 * `cfg` must be readable, `buf` writable for `len` bytes, `written` writable.
 */
enum UvpStatus uvp_kernel_report_json(const struct UvpConfig *cfg,
                                      enum UvpKernel kernel,
                                      uint32_t a,
                                      uint32_t b,
                                      uint32_t c,
                                      uint64_t seed,
                                      char *buf,
                                      uintptr_t len,
                                      uintptr_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UVP_H */
