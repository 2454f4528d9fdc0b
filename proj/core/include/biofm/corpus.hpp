#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "biofm/tensor.hpp"

namespace biofm {

enum class Modality { Ppg, Ecg };
enum class Split { Train, Val, Test };

std::string to_string(Modality m);
std::string to_string(Split s);
Modality modality_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct ModalityConfig {
  Modality modality = Modality::Ppg;
  int channels = 4;
  int sample_rate_hz = 64;
  double segment_seconds = 8.0;
  double within_participant_jitter = 0.6;

  static ModalityConfig ppg();  // 4 x 512 at desk scale
  static ModalityConfig ecg();  // 1 x 1024 at desk scale
  std::size_t segment_length() const;
  void validate() const;
};

inline constexpr int kMorphologyParams = 6;

struct ParticipantLatent {
  int participant_id = 0;
  double base_heart_rate_bpm = 75.0;
  double hr_variability = 0.03;
  std::array<double, kMorphologyParams> morphology{};
  double noise_level = 0.1;
  double pseudo_age = 50.0;
  double pseudo_bmi = 25.0;
  int pseudo_sex = 0;
};

struct SegmentRecord {
  int segment_id = 0;
  int participant_id = 0;
  Split split = Split::Train;
  Tensor<float> samples;  // [channels, length], channel-wise z-scored
};

struct CorpusConfig {
  ModalityConfig modality = ModalityConfig::ppg();
  int n_participants = 200;
  int segments_per_participant = 20;
  std::uint64_t seed = 7;
  double train_fraction = 0.8;
  double val_fraction = 0.1;

  void validate() const;
};

struct Corpus {
  CorpusConfig config;
  std::vector<SegmentRecord> segments;  // grouped by participant, segment_id == position
  std::vector<ParticipantLatent> participants;
  std::array<std::uint32_t, 3> checksums{};  // segments.bin, index.csv, labels.csv

  std::vector<const SegmentRecord*> split_segments(Split split) const;
  std::vector<int> split_participants(Split split) const;
  Split split_of(int participant_id) const;
};

// Latents are a pure function of (corpus_seed, participant_id).
ParticipantLatent sample_participant(std::uint64_t corpus_seed, int participant_id);

// Raw segment before z-scoring is not exposed; the result is z-scored per channel.
Tensor<float> synthesize_segment(const ParticipantLatent& latent, const ModalityConfig& cfg,
                                 std::uint64_t segment_seed);

std::uint64_t segment_seed(std::uint64_t corpus_seed, int participant_id, int segment_index);

// Builds the corpus in memory (the same bytes write_corpus persists).
Corpus build_corpus(const CorpusConfig& config);

// Writes manifest.json, segments.bin, index.csv and labels.csv into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus generate_corpus(const CorpusConfig& config, const std::filesystem::path& dir);

// Validates version, sizes and CRC-32 checksums; throws IoError on any mismatch.
Corpus load_corpus(const std::filesystem::path& dir);

inline constexpr int kCorpusFormatVersion = 1;

}  // namespace biofm
