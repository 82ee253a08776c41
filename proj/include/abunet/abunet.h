#ifndef ABUNET_H
#define ABUNET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define ABUNET_API __declspec(dllexport)
#else
#define ABUNET_API __attribute__((visibility("default")))
#endif

typedef enum abunet_status {
  ABUNET_OK = 0,
  ABUNET_RUN_FAILURE = 1,          /* a run or sweep did not complete */
  ABUNET_CONFIG_ERROR = 2,         /* invalid names, options or combinations */
  ABUNET_VERIFICATION_FAILURE = 3, /* a gradient check failed */
  ABUNET_IO_ERROR = 4,             /* missing or malformed files */
  ABUNET_NUMERIC_ERROR = 5,        /* NaN/Inf, degenerate normalization */
  ABUNET_SHAPE_ERROR = 6,
  ABUNET_INTERNAL_ERROR = 7
} abunet_status;

typedef struct abunet_config abunet_config;
typedef struct abunet_network abunet_network;

/* Receives one line of progress or report text (no trailing newline). */
typedef void (*abunet_line_fn)(const char* line, void* user);

ABUNET_API const char* abunet_version(void);
ABUNET_API const char* abunet_status_name(abunet_status status);

/* Message of the most recent failing call on this thread; "" after success. */
ABUNET_API const char* abunet_last_error(void);

/* Training configuration, initialized with the defaults. */
ABUNET_API abunet_status abunet_config_create(abunet_config** out);
ABUNET_API abunet_status abunet_config_load(const char* path, abunet_config** out);
ABUNET_API abunet_status abunet_config_set(abunet_config* config, const char* key, const char* value);
ABUNET_API abunet_status abunet_config_validate(const abunet_config* config);
/* Copies the "key = value" text into buf (NUL-terminated, truncated to
   capacity); *needed receives the full length including the NUL. */
ABUNET_API abunet_status abunet_config_text(const abunet_config* config, char* buf, size_t capacity,
                                            size_t* needed);
ABUNET_API void abunet_config_destroy(abunet_config* config);

typedef struct abunet_train_result {
  double test_accuracy;
  double train_accuracy;
  uint64_t selected_step;
  size_t checkpoints;
} abunet_train_result;

/* Trains into run_dir (created if needed). progress may be NULL. */
ABUNET_API abunet_status abunet_train(const abunet_config* config, const char* run_dir, abunet_line_fn progress,
                                      void* user, abunet_train_result* result);

/* Test accuracy of a checkpoint. task and data_dir may be NULL or empty to
   use the settings of the run directory holding the checkpoint. */
ABUNET_API abunet_status abunet_eval(const char* checkpoint, const char* task, const char* data_dir,
                                     double* accuracy, size_t* examples);

/* scope: "activations", "network" or "all". analytic_scale multiplies every
   analytic gradient before comparison (1.0 for a real check).
   Returns ABUNET_VERIFICATION_FAILURE when any comparison fails. */
ABUNET_API abunet_status abunet_gradcheck(const char* scope, uint64_t seed, size_t cases, double analytic_scale,
                                          abunet_line_fn report, void* user);

/* Writes the analysis report of the given run directories line by line. */
ABUNET_API abunet_status abunet_analyze(const char* const* run_dirs, size_t count, abunet_line_fn report,
                                        void* user);

/* Runs a grid file; the table goes to out_dir/table.txt and to report.
   Returns ABUNET_RUN_FAILURE when any run failed (the table is still
   written). data_dir may be NULL. */
ABUNET_API abunet_status abunet_sweep(const char* grid_file, const char* out_dir, const char* data_dir,
                                      abunet_line_fn report, void* user, size_t* failures);

/* Networks. dims is "full", "desk" or "<conv>/<dense1>/<dense2>". */
ABUNET_API abunet_status abunet_network_create(const char* arch, const char* activation, int num_classes,
                                               uint64_t seed, const char* dims, abunet_network** out);
ABUNET_API abunet_status abunet_network_load(const char* checkpoint, abunet_network** out);
ABUNET_API abunet_status abunet_network_save(const abunet_network* net, const char* path);
ABUNET_API abunet_status abunet_network_param_count(const abunet_network* net, size_t* count);
ABUNET_API abunet_status abunet_network_num_classes(const abunet_network* net, int* classes);
/* Evaluation-mode logits. images: batch x 32 x 32 x 3 raw pixel bytes
   (HWC); each image is standardized before the forward pass. logits
   receives batch x num_classes values. */
ABUNET_API abunet_status abunet_network_predict(abunet_network* net, const uint8_t* images, size_t batch,
                                                double* logits);
ABUNET_API void abunet_network_destroy(abunet_network* net);

#ifdef __cplusplus
}
#endif

#endif
