#pragma once

#include <map>
#include <string>

#include "flowlab/training.hpp"

namespace flowlab {

// --------------------------- checkpoint files -------------------------------
// Text header (key = value lines) terminated by one blank line, followed by
// the raw parameter block as little-endian IEEE-754 doubles.
struct CheckpointMeta {
    std::string stage;
    MlpArch arch;
    Schedule sched;
    double sigma_data = 0.5;
    std::uint64_t seed = 0;
    long long step = 0;
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta, const NetParams& params);
std::pair<CheckpointMeta, NetParams> load_checkpoint(const std::string& path);

// ------------------------------- CSV outputs --------------------------------
void write_loss_csv(const std::string& path, const std::vector<LossReport>& reports);
// one record per state: anchor, i, t, x..., teacher_nfes
void write_trajectories_csv(const std::string& path, const std::vector<Trajectory>& trajectories);
void write_samples_csv(const std::string& path, const std::vector<Array>& samples,
                       std::size_t dim);
void write_curve_csv(const std::string& path, const std::string& value_name,
                     const std::vector<std::pair<long long, double>>& curve);

// ------------------------------ flat config ---------------------------------
// key = value lines; '#' starts a comment; later keys win
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);
void apply_override(ConfigMap& config, const std::string& key_eq_value);
std::string render_config(const ConfigMap& config);  // canonical and re-parseable

// typed getters (throw ConfigError on malformed values)
std::string config_get(const ConfigMap& c, const std::string& key, const std::string& fallback);
double config_get_real(const ConfigMap& c, const std::string& key, double fallback);
long long config_get_int(const ConfigMap& c, const std::string& key, long long fallback);
bool config_get_bool(const ConfigMap& c, const std::string& key, bool fallback);

// assemble domain objects from a config map (shared by the CLI and tests)
Schedule schedule_from_config(const ConfigMap& c);
Dataset dataset_from_config(const ConfigMap& c);
MlpArch arch_from_config(const ConfigMap& c);
TrainConfig train_config_from(const ConfigMap& c);

// FNV-1a 64 content hash, hex-encoded
std::string file_hash_hex(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace flowlab
