#include "spacetime/spacetime.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <numeric>
#include <string>

#include "json.hpp"
#include "spacetime/dataset.hpp"
#include "spacetime/error.hpp"
#include "spacetime/model.hpp"
#include "spacetime/training.hpp"
#include "spacetime/verify.hpp"

struct st_dataset {
    spacetime::Dataset value;
};

struct st_model {
    std::unique_ptr<spacetime::Model> value;
};

namespace {

using nlohmann::json;

thread_local std::string last_error;

template <class F>
st_status guarded(F&& f) {
    last_error.clear();
    try {
        f();
        return ST_OK;
    } catch (const spacetime::InvalidArgument& e) {
        last_error = e.what();
        return ST_ERR_INVALID_ARGUMENT;
    } catch (const spacetime::ShapeError& e) {
        last_error = e.what();
        return ST_ERR_SHAPE;
    } catch (const spacetime::IoError& e) {
        last_error = e.what();
        return ST_ERR_IO;
    } catch (const spacetime::FormatError& e) {
        last_error = e.what();
        return ST_ERR_FORMAT;
    } catch (const spacetime::DivergenceError& e) {
        last_error = e.what();
        return ST_ERR_DIVERGED;
    } catch (const json::exception& e) {
        last_error = e.what();
        return ST_ERR_INVALID_ARGUMENT;
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return ST_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return ST_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown error";
        return ST_ERR_INTERNAL;
    }
}

template <class T>
void require(const T* p, const char* what) {
    if (p == nullptr) throw spacetime::InvalidArgument(std::string(what) + " must not be null");
}

char* copy_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::string json_or_empty(const char* text) { return text == nullptr || *text == '\0' ? "{}" : text; }

json dataset_info(const spacetime::Dataset& ds) {
    return json{{"split", ds.split},
                {"count", ds.size()},
                {"config", json::parse(spacetime::config_to_json(ds.config))}};
}

}  // namespace

extern "C" {

const char* st_version(void) { return "1.0.0"; }

const char* st_last_error(void) { return last_error.c_str(); }

void st_string_free(char* s) { std::free(s); }

st_status st_dataset_generate(const char* config_json, const char* split, st_dataset** out) {
    return guarded([&] {
        require(split, "split");
        require(out, "out");
        *out = nullptr;
        const auto config = spacetime::config_from_json(json_or_empty(config_json));
        *out = new st_dataset{spacetime::generate_dataset(config, split)};
    });
}

st_status st_dataset_read(const char* path, st_dataset** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        *out = new st_dataset{spacetime::read_dataset(path)};
    });
}

st_status st_dataset_write(const st_dataset* dataset, const char* path) {
    return guarded([&] {
        require(dataset, "dataset");
        require(path, "path");
        spacetime::write_dataset(path, dataset->value);
    });
}

st_status st_dataset_add_noise(const st_dataset* dataset, double variance, uint64_t seed, st_dataset** out) {
    return guarded([&] {
        require(dataset, "dataset");
        require(out, "out");
        *out = nullptr;
        *out = new st_dataset{spacetime::add_noise(dataset->value, variance, seed)};
    });
}

st_status st_dataset_size(const st_dataset* dataset, size_t* out) {
    return guarded([&] {
        require(dataset, "dataset");
        require(out, "out");
        *out = dataset->value.size();
    });
}

st_status st_dataset_info(const st_dataset* dataset, char** out_json) {
    return guarded([&] {
        require(dataset, "dataset");
        require(out_json, "out_json");
        *out_json = copy_string(dataset_info(dataset->value).dump());
    });
}

st_status st_dataset_trajectory(const st_dataset* dataset, size_t index, double* charges, double* positions,
                                double* velocities) {
    return guarded([&] {
        require(dataset, "dataset");
        if (index >= dataset->value.size()) throw spacetime::InvalidArgument("trajectory index out of range");
        const auto& t = dataset->value.trajectories[index];
        if (charges != nullptr) std::copy(t.charges.begin(), t.charges.end(), charges);
        if (positions != nullptr) std::copy(t.positions.begin(), t.positions.end(), positions);
        if (velocities != nullptr) std::copy(t.velocities.begin(), t.velocities.end(), velocities);
    });
}

void st_dataset_free(st_dataset* dataset) { delete dataset; }

st_status st_model_create(const char* config_json, st_model** out) {
    return guarded([&] {
        require(out, "out");
        *out = nullptr;
        auto model = spacetime::make_model(spacetime::ModelConfig::from_json(json_or_empty(config_json)));
        *out = new st_model{std::move(model)};
    });
}

st_status st_model_load(const char* path, st_model** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        *out = new st_model{spacetime::load_model(path)};
    });
}

st_status st_model_save(const st_model* model, const char* path) {
    return guarded([&] {
        require(model, "model");
        require(path, "path");
        spacetime::save_model(path, *model->value);
    });
}

st_status st_model_config(const st_model* model, char** out_json) {
    return guarded([&] {
        require(model, "model");
        require(out_json, "out_json");
        *out_json = copy_string(model->value->config().to_json());
    });
}

st_status st_model_param_count(const st_model* model, size_t* out) {
    return guarded([&] {
        require(model, "model");
        require(out, "out");
        *out = model->value->param_count();
    });
}

st_status st_param_count(const char* config_json, size_t* out) {
    return guarded([&] {
        require(out, "out");
        *out = spacetime::closed_form_param_count(spacetime::ModelConfig::from_json(json_or_empty(config_json)));
    });
}

st_status st_model_predict(const st_model* model, const st_dataset* dataset, size_t first, size_t count,
                           double* out_positions, double* out_velocities) {
    return guarded([&] {
        require(model, "model");
        require(dataset, "dataset");
        require(out_positions, "out_positions");
        require(out_velocities, "out_velocities");
        const auto& ds = dataset->value;
        if (count == 0 || first > ds.size() || count > ds.size() - first) {
            throw spacetime::InvalidArgument("prediction range exceeds the dataset");
        }
        model->value->config().check_compatible(ds.config);
        std::vector<std::size_t> idx(count);
        std::iota(idx.begin(), idx.end(), first);
        spacetime::NoGradGuard no_grad;
        const auto pred = model->value->forward(spacetime::make_batch(ds, idx));
        const auto x = pred.x.data();
        const auto v = pred.v.data();
        std::copy(x.begin(), x.end(), out_positions);
        std::copy(v.begin(), v.end(), out_velocities);
    });
}

void st_model_free(st_model* model) { delete model; }

st_status st_train(st_model* model, const st_dataset* train, const st_dataset* val, const char* config_json,
                   st_epoch_callback callback, void* user, char** history_json) {
    return guarded([&] {
        require(model, "model");
        require(train, "train");
        require(val, "val");
        if (history_json != nullptr) *history_json = nullptr;
        const auto config = spacetime::TrainConfig::from_json(json_or_empty(config_json));
        spacetime::EpochCallback on_epoch;
        if (callback != nullptr) {
            on_epoch = [&](const spacetime::EpochMetrics& m) { callback(m.to_json().c_str(), user); };
        }
        const auto result = spacetime::train(*model->value, train->value, val->value, config, on_epoch);
        if (history_json != nullptr) {
            json history = json::array();
            for (const auto& m : result.history) history.push_back(json::parse(m.to_json()));
            *history_json = copy_string(
                json{{"history", history}, {"best_epoch", result.best_epoch}, {"best_val_mse", result.best_val_mse}}
                    .dump());
        }
    });
}

st_status st_evaluate(const st_model* model, const st_dataset* dataset, char** out_json) {
    return guarded([&] {
        require(model, "model");
        require(dataset, "dataset");
        require(out_json, "out_json");
        const auto m = spacetime::evaluate(*model->value, dataset->value);
        *out_json = copy_string(
            json{{"pos_mse", m.pos_mse}, {"vel_mse", m.vel_mse}, {"mse", m.mse}, {"loss", m.loss}}.dump());
    });
}

st_status st_verify(const char* options_json, int* all_passed, char** report_json) {
    return guarded([&] {
        require(all_passed, "all_passed");
        const json j = json::parse(json_or_empty(options_json));
        spacetime::verify::SuiteOptions o;
        o.trials = j.value("trials", o.trials);
        o.tolerance = j.value("tolerance", o.tolerance);
        o.seed = j.value("seed", o.seed);
        o.n_particles = j.value("n_particles", o.n_particles);
        o.seq_len = j.value("seq_len", o.seq_len);
        o.feature_dim = j.value("feature_dim", o.feature_dim);
        o.hidden_dim = j.value("hidden_dim", o.hidden_dim);
        const auto results = spacetime::verify::run_property_suite(o);
        bool ok = true;
        json props = json::array();
        for (const auto& r : results) {
            ok = ok && r.passed;
            props.push_back({{"name", r.name},
                             {"max_deviation", r.max_deviation},
                             {"tolerance", r.tolerance},
                             {"passed", r.passed}});
        }
        *all_passed = ok ? 1 : 0;
        if (report_json != nullptr) *report_json = copy_string(json{{"properties", props}, {"all_passed", ok}}.dump());
    });
}

}  // extern "C"
