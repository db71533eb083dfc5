#pragma once

#include <cstdint>
#include <string>

#include "aqmm/grid_baseline.hpp"
#include "aqmm/scorer.hpp"

namespace aqmm {

// Declarative run configuration. TOML sections map to the nested structs;
// unknown sections or keys are rejected. Environment variables of the form
// AQMM_<SECTION>_<KEY> override file values.
struct RunConfig {
    struct Dataset {
        std::uint64_t seed = 17;
    } dataset;

    struct Model {
        std::string kind = "aquamam";  // aquamam | aquamam-mog | grid
        int n_bins = 4096;
        int penc_frequencies = 6;
        int context_dim = 64;
        int hidden1 = 128;
        int hidden2 = 128;
        int mog_components = 512;
        int viewpoints = 6;
        // grid kind only
        int grid_hidden = 64;
        int grid_size = 65536;  // evaluation grid cells M
        int n_train = 4096;     // scored rotations per training sample
    } model;

    struct Training {
        double lr = 1e-4;
        int batch = 128;
        int epoch_samples = 40000;
        int max_epochs = 624;
        int patience = 5;
        int max_halvings = 8;
        int val_samples = 4096;
        std::uint64_t seed = 1;
    } training;

    struct Eval {
        long n_samples = 40000;
        std::uint64_t seed = 2;
    } eval;

    void validate() const;  // throws on inconsistent values

    ScorerConfig scorer_config() const;
    GridModelConfig grid_model_config() const;
    TrainConfig train_config() const;
    GridTrainConfig grid_train_config() const;

    std::string to_toml() const;

    static RunConfig from_toml_text(const std::string& text);
    static RunConfig from_toml_file(const std::string& path);  // + env overrides
};

}  // namespace aqmm
