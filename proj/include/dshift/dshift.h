/* C interface to the dshift library.
 *
 * Objects are opaque handles created by the library and released with the
 * matching *_free function (passing NULL is allowed). Functions that can fail
 * return a dshift_status; on failure dshift_last_error() describes the cause
 * for the calling thread until the next failing call. Strings returned by the
 * library stay valid for the lifetime of the owning handle.
 */
#ifndef DSHIFT_H
#define DSHIFT_H

#include <stddef.h>
#include <stdint.h>

#if defined(DSHIFT_BUILDING_LIBRARY)
#define DSHIFT_API __attribute__((visibility("default")))
#else
#define DSHIFT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes of the dshift tool. */
typedef enum dshift_status {
  DSHIFT_OK = 0,
  DSHIFT_ERR_USAGE = 1,    /* invalid argument, option or config value */
  DSHIFT_ERR_DATA = 2,     /* IO, decoding, shape or file-format problem */
  DSHIFT_ERR_TRAINING = 3  /* a training or experiment stage failed */
} dshift_status;

typedef struct dshift_dataset dshift_dataset;
typedef struct dshift_camera dshift_camera;
typedef struct dshift_shifter dshift_shifter;
typedef struct dshift_classifier dshift_classifier;
typedef struct dshift_evaluation dshift_evaluation;
typedef struct dshift_config dshift_config;
typedef struct dshift_report dshift_report;

DSHIFT_API const char* dshift_version(void);
DSHIFT_API const char* dshift_last_error(void);

/* 0 quiet, 1 progress messages, 2 debug; messages go to stderr. */
DSHIFT_API dshift_status dshift_set_verbosity(int level);

/* ---- datasets ---------------------------------------------------------- */

typedef struct dshift_gen_options {
  size_t classes;      /* default 5 */
  size_t per_class;    /* default 400 */
  size_t resolution;   /* default 64 */
  uint64_t seed;       /* default 0 */
  size_t first_family; /* default 0 */
} dshift_gen_options;

DSHIFT_API void dshift_gen_options_init(dshift_gen_options* options);
DSHIFT_API size_t dshift_shape_family_count(void);
/* NULL when out of range. */
DSHIFT_API const char* dshift_shape_family_name(size_t family);

/* Renders the procedural dataset under `out` and returns it opened. */
DSHIFT_API dshift_status dshift_gen_data(const char* out, const dshift_gen_options* options,
                                         dshift_dataset** result);

/* Opens a labeled folder laid out as <root>/<class>/<image>. */
DSHIFT_API dshift_status dshift_dataset_open(const char* root, dshift_dataset** result);
DSHIFT_API void dshift_dataset_free(dshift_dataset* set);
DSHIFT_API size_t dshift_dataset_size(const dshift_dataset* set);
DSHIFT_API size_t dshift_dataset_class_count(const dshift_dataset* set);
DSHIFT_API const char* dshift_dataset_class_name(const dshift_dataset* set, size_t index);
DSHIFT_API size_t dshift_dataset_class_size(const dshift_dataset* set, size_t index);
DSHIFT_API size_t dshift_dataset_warning_count(const dshift_dataset* set);
DSHIFT_API const char* dshift_dataset_warning(const dshift_dataset* set, size_t index);
DSHIFT_API size_t dshift_dataset_ignored_files(const dshift_dataset* set);

/* ---- camera model ------------------------------------------------------ */

DSHIFT_API dshift_status dshift_camera_virtual(dshift_camera** result);
DSHIFT_API dshift_status dshift_camera_identity(dshift_camera** result);
/* Reads `camera.*` keys from a config-format file; keys left out keep the
 * virtual-camera values. */
DSHIFT_API dshift_status dshift_camera_load(const char* path, dshift_camera** result);
DSHIFT_API void dshift_camera_free(dshift_camera* camera);

/* Writes out/clean/<rel> and out/low/<rel> for every image of `set`. */
DSHIFT_API dshift_status dshift_degrade_paired(const dshift_dataset* set,
                                               const dshift_camera* camera, uint64_t seed,
                                               const char* out, size_t* pair_count);
/* Writes degraded copies under out/<class>/<file>, keeping labels. */
DSHIFT_API dshift_status dshift_degrade_labeled(const dshift_dataset* set,
                                                const dshift_camera* camera, uint64_t seed,
                                                const char* out, dshift_dataset** result);

/* ---- domain-shifting network ------------------------------------------- */

typedef struct dshift_shifter_options {
  size_t epochs;              /* default 100 */
  size_t batch_size;          /* default 32 */
  double lr;                  /* default 0.01 */
  double decay_factor;        /* default 0.5 */
  size_t decay_every;         /* default 30 */
  double validation_fraction; /* default 0.1 */
  uint64_t seed;              /* default 0 */
} dshift_shifter_options;

DSHIFT_API void dshift_shifter_options_init(dshift_shifter_options* options);

/* Trains on the paired folder `pairs_root` (clean/ and low/). */
DSHIFT_API dshift_status dshift_shifter_train(const char* pairs_root,
                                              const dshift_shifter_options* options,
                                              dshift_shifter** result);
DSHIFT_API dshift_status dshift_shifter_load(const char* path, dshift_shifter** result);
DSHIFT_API dshift_status dshift_shifter_save(const dshift_shifter* shifter, const char* path);
DSHIFT_API void dshift_shifter_free(dshift_shifter* shifter);
DSHIFT_API size_t dshift_shifter_parameter_count(const dshift_shifter* shifter);

/* Loss history of a trained shifter; length 0 after loading. val_l2 is NaN
 * when training ran without a validation split. */
DSHIFT_API size_t dshift_shifter_history_length(const dshift_shifter* shifter);
DSHIFT_API double dshift_shifter_train_l2(const dshift_shifter* shifter, size_t epoch);
DSHIFT_API double dshift_shifter_val_l2(const dshift_shifter* shifter, size_t epoch);
/* `epoch,train_l2,val_l2` rows. */
DSHIFT_API dshift_status dshift_shifter_write_loss_log(const dshift_shifter* shifter,
                                                       const char* path);

/* Maps every image of `set` into `out`, preserving relative paths. */
DSHIFT_API dshift_status dshift_shift_dataset(const dshift_shifter* shifter,
                                              const dshift_dataset* set, const char* out,
                                              dshift_dataset** result);

/* ---- classifier -------------------------------------------------------- */

typedef struct dshift_classifier_options {
  size_t epochs;        /* default 100 */
  size_t batch_size;    /* default 32 */
  double lr_min;        /* default 1e-3 */
  double lr_max;        /* default 1e-1 */
  size_t ramp_steps;    /* default 20 */
  double momentum;      /* default 0.9 */
  double grad_clip;     /* default 5; 0 disables */
  size_t freeze_prefix; /* default 0 */
  uint64_t seed;        /* default 0 */
} dshift_classifier_options;

typedef struct dshift_epoch_record {
  double lr;
  double train_loss;
  double train_accuracy;
  double val_loss;
  double val_accuracy;
} dshift_epoch_record;

DSHIFT_API void dshift_classifier_options_init(dshift_classifier_options* options);

/* Trains on the union of `train[0..train_count)`, selecting the epoch with
 * the best accuracy on `val`. */
DSHIFT_API dshift_status dshift_classifier_train(const dshift_dataset* const* train,
                                                 size_t train_count, const dshift_dataset* val,
                                                 const dshift_classifier_options* options,
                                                 dshift_classifier** result);
DSHIFT_API dshift_status dshift_classifier_load(const char* path, dshift_classifier** result);
DSHIFT_API dshift_status dshift_classifier_save(const dshift_classifier* classifier,
                                                const char* path);
DSHIFT_API void dshift_classifier_free(dshift_classifier* classifier);
DSHIFT_API size_t dshift_classifier_class_count(const dshift_classifier* classifier);
DSHIFT_API const char* dshift_classifier_class_name(const dshift_classifier* classifier,
                                                    size_t index);
DSHIFT_API size_t dshift_classifier_history_length(const dshift_classifier* classifier);
DSHIFT_API dshift_status dshift_classifier_history(const dshift_classifier* classifier,
                                                   size_t epoch, dshift_epoch_record* record);
/* 0-based epoch whose parameters were kept. */
DSHIFT_API size_t dshift_classifier_best_epoch(const dshift_classifier* classifier);

DSHIFT_API dshift_status dshift_evaluate(const dshift_classifier* classifier,
                                         const dshift_dataset* test,
                                         dshift_evaluation** result);
DSHIFT_API void dshift_evaluation_free(dshift_evaluation* evaluation);
DSHIFT_API double dshift_evaluation_accuracy(const dshift_evaluation* evaluation);
DSHIFT_API double dshift_evaluation_loss(const dshift_evaluation* evaluation);
DSHIFT_API size_t dshift_evaluation_total(const dshift_evaluation* evaluation);
/* Count of images of class `truth` predicted as `predicted`. */
DSHIFT_API size_t dshift_evaluation_confusion(const dshift_evaluation* evaluation, size_t truth,
                                              size_t predicted);
DSHIFT_API dshift_status dshift_evaluation_write_confusion(const dshift_evaluation* evaluation,
                                                           const dshift_classifier* classifier,
                                                           const char* path);

/* ---- experiment configuration and report ------------------------------- */

DSHIFT_API dshift_status dshift_config_default(dshift_config** result);
DSHIFT_API dshift_status dshift_config_load(const char* path, dshift_config** result);
DSHIFT_API dshift_status dshift_config_parse(const char* text, dshift_config** result);
DSHIFT_API void dshift_config_free(dshift_config* config);
DSHIFT_API dshift_status dshift_config_set(dshift_config* config, const char* key,
                                           const char* value);
/* Resolved `key = value` text. */
DSHIFT_API const char* dshift_config_dump(dshift_config* config);

/* Documented keys, in dump order. Any output pointer may be NULL. */
DSHIFT_API size_t dshift_config_key_count(void);
DSHIFT_API dshift_status dshift_config_key(size_t index, const char** key,
                                           const char** default_value,
                                           const char** description);

DSHIFT_API dshift_status dshift_experiment_run(const dshift_config* config,
                                               dshift_report** result);
DSHIFT_API void dshift_report_free(dshift_report* report);
DSHIFT_API size_t dshift_report_row_count(const dshift_report* report);
DSHIFT_API dshift_status dshift_report_row(const dshift_report* report, size_t index,
                                           const char** regime, double* clean_accuracy,
                                           double* degraded_accuracy);
/* 1 when every trend requirement holds, else 0. */
DSHIFT_API int dshift_report_trend_holds(const dshift_report* report);
DSHIFT_API const char* dshift_report_table(const dshift_report* report);
DSHIFT_API const char* dshift_report_csv(const dshift_report* report);

#ifdef __cplusplus
}
#endif

#endif /* DSHIFT_H */
