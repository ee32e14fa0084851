#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pskd/tensor.hpp"

namespace pskd {

// Dimension metadata shared by every sample in a dataset. Skeleton
// sequences are (c_sk, t_sk, n_sk) channels x frames x joints; the
// accelerometer stream is (c_ac, s_ac, t_ac) channels x sensors x
// frames. Both modalities carry x/y/z values, so c_sk = c_ac = 3.
struct DatasetMeta {
    int num_classes = 0;
    int c_sk = 3;
    int t_sk = 0;
    int n_sk = 0;
    int c_ac = 3;
    int s_ac = 1;
    int t_ac = 0;
    std::vector<std::string> class_names;

    void validate() const;
};

struct Sample {
    int label = 0;
    std::optional<int> subject;  // one participant per sample throughout
    Tensor skeleton;             // (c_sk, t_sk, n_sk)
    Tensor accel;                // (c_ac, s_ac, t_ac)
};

enum class Split : std::uint8_t { train, test };

struct Dataset {
    DatasetMeta meta;
    std::vector<Sample> samples;
    std::vector<Split> split;  // one tag per sample; empty until split_dataset

    std::vector<int> indices_of(Split s) const;
    void validate() const;  // every sample conforms to meta dims
};

struct GenConfig {
    int num_classes = 6;
    int samples_per_class = 150;
    int t_sk = 40;
    int n_sk = 8;
    int t_ac = 32;
    // Noise defaults calibrated (against the default generator draw) so a
    // nearest-centroid probe clears chance comfortably on skeletons while
    // the accelerometer stream stays the strictly harder modality.
    double sigma_sk = 2.0;
    double sigma_ac = 5.0;
    int wrist_joint = 0;
    std::uint64_t seed = 7;

    void validate() const;
};

// Synthetic paired cross-modal data. Per class a latent prototype
// trajectory per joint is drawn (a sum of 2-3 sinusoids with class-keyed
// frequencies, plus per-sample phase/amplitude jitter). The skeleton is
// the jittered prototype plus Gaussian noise sigma_sk; the accelerometer
// stream is the second discrete time-difference of the wrist joint's
// latent trajectory, resampled to t_ac, plus Gaussian noise sigma_ac.
// Accelerometers measure acceleration, and deriving the stream from one
// joint guarantees the skeleton modality's information advantage.
// A pure function of the config: identical bytes for identical configs.
Dataset generate_dataset(const GenConfig& cfg);

// Linear interpolation along the trailing time axis at uniformly spaced
// positions mapping endpoint to endpoint. Identity (input returned
// unchanged) when lengths already match.
Tensor resample_time(const Tensor& series, int target_len);

// Same resampling along an arbitrary axis; resample_time is axis = last.
Tensor resample_axis(const Tensor& t, int axis, int target_len);

// Resamples both modalities to a common length T, broadcasts the
// accelerometer channels across the joint axis, and channel-concatenates
// with the skeleton: (c_sk + c_ac, T, n_sk). The broadcast is the only
// reading of the fused shape that needs no extra assumptions; attaching
// a dedicated sensor node would change n_sk.
Tensor fuse_modalities(const Tensor& sk, const Tensor& ac, int t_common);

// Stratified per-class shuffle split; deterministic per seed; every
// class ends up in both splits.
void split_dataset(Dataset& ds, double train_fraction, std::uint64_t seed);

// File pair: meta.json + data.jsonl, one sample object per line.
Dataset ingest_jsonl(const std::string& data_path, const std::string& meta_path);
void write_dataset(const Dataset& ds, const std::string& data_path, const std::string& meta_path);

// Per-channel z-score statistics, computed on the train split only and
// applied identically to both splits. Zero-variance channels pass
// through unscaled.
struct NormStats {
    std::vector<double> sk_mean, sk_std;  // per skeleton channel
    std::vector<double> ac_mean, ac_std;  // per accelerometer channel
};

NormStats normalize(Dataset& ds);
void write_norm_stats(const NormStats& st, const std::string& path);

}  // namespace pskd
