/* C interface to the spacetime library.
 *
 * Objects are opaque handles released with the matching *_free function.
 * Every fallible call returns an st_status; on failure a description of the
 * error is available from st_last_error() on the same thread until the next
 * call into the library. Strings returned through out-parameters are
 * allocated by the library and released with st_string_free().
 *
 * Configurations are passed as JSON objects; missing keys take defaults. */
#ifndef SPACETIME_H
#define SPACETIME_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ST_API __declspec(dllexport)
#else
#define ST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum st_status {
    ST_OK = 0,
    ST_ERR_INVALID_ARGUMENT = 1,
    ST_ERR_SHAPE = 2,
    ST_ERR_IO = 3,
    ST_ERR_FORMAT = 4,
    ST_ERR_DIVERGED = 5,
    ST_ERR_INTERNAL = 6
} st_status;

typedef struct st_dataset st_dataset;
typedef struct st_model st_model;

ST_API const char* st_version(void);
ST_API const char* st_last_error(void);
ST_API void st_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

/* split is "train", "val" or "test". Keys: n_particles, seq_len, horizon,
 * train_count, val_count, test_count, noise_variance, dt, softening, stride,
 * seed. */
ST_API st_status st_dataset_generate(const char* config_json, const char* split, st_dataset** out);
ST_API st_status st_dataset_read(const char* path, st_dataset** out);
ST_API st_status st_dataset_write(const st_dataset* dataset, const char* path);
ST_API st_status st_dataset_add_noise(const st_dataset* dataset, double variance, uint64_t seed, st_dataset** out);
ST_API st_status st_dataset_size(const st_dataset* dataset, size_t* out);
/* {"split": ..., "count": ..., "config": {...}} */
ST_API st_status st_dataset_info(const st_dataset* dataset, char** out_json);
/* Copies one trajectory. charges holds N values; positions and velocities
 * hold (L+H+1)*N*3 values each. Pass NULL for any array to skip it. */
ST_API st_status st_dataset_trajectory(const st_dataset* dataset, size_t index, double* charges, double* positions,
                                       double* velocities);
ST_API void st_dataset_free(st_dataset* dataset);

/* ---- models ------------------------------------------------------------ */

/* Keys: model ("set", "egnn", "mlp", "linear"), n_particles, seq_len,
 * horizon, feature_dim, hidden_dim, egcl_layers, blocks, equivariant,
 * temporal_adjacency, spatial_attention, temporal_attention,
 * positional_encoding, causal, recompute_edges, position_coeff, loss_alpha,
 * mlp_hidden, mlp_layers, seed. */
ST_API st_status st_model_create(const char* config_json, st_model** out);
ST_API st_status st_model_load(const char* path, st_model** out);
ST_API st_status st_model_save(const st_model* model, const char* path);
ST_API st_status st_model_config(const st_model* model, char** out_json);
ST_API st_status st_model_param_count(const st_model* model, size_t* out);
/* Closed-form count for a configuration, without building the model. */
ST_API st_status st_param_count(const char* config_json, size_t* out);
/* Predicts the t = L+H state of trajectories [first, first+count) of a
 * dataset. out_positions and out_velocities hold count*N*3 values. */
ST_API st_status st_model_predict(const st_model* model, const st_dataset* dataset, size_t first, size_t count,
                                  double* out_positions, double* out_velocities);
ST_API void st_model_free(st_model* model);

/* ---- training and evaluation ------------------------------------------ */

/* Called after every evaluated epoch with one JSON metrics object. */
typedef void (*st_epoch_callback)(const char* metrics_json, void* user);

/* Keys: epochs, batch_size, lr, weight_decay, dropout, grad_clip, seed,
 * eval_every, checkpoint_path. On success the model holds the parameters of
 * the best validation epoch; history_json (optional) receives
 * {"history": [...], "best_epoch": k, "best_val_mse": x}. */
ST_API st_status st_train(st_model* model, const st_dataset* train, const st_dataset* val, const char* config_json,
                          st_epoch_callback callback, void* user, char** history_json);
/* {"pos_mse": ..., "vel_mse": ..., "mse": ..., "loss": ...} */
ST_API st_status st_evaluate(const st_model* model, const st_dataset* dataset, char** out_json);

/* ---- property verification -------------------------------------------- */

/* Keys: trials, tolerance, seed, n_particles, seq_len, feature_dim,
 * hidden_dim. report_json receives {"properties": [{name, max_deviation,
 * tolerance, passed}], "all_passed": b}. */
ST_API st_status st_verify(const char* options_json, int* all_passed, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* SPACETIME_H */
