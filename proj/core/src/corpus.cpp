#include "biofm/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "biofm/config.hpp"
#include "biofm/io.hpp"
#include "biofm/rng.hpp"

namespace biofm {

std::string to_string(Modality m) { return m == Modality::Ppg ? "ppg" : "ecg"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Modality modality_from_string(const std::string& s) {
  if (s == "ppg") return Modality::Ppg;
  if (s == "ecg") return Modality::Ecg;
  throw ValidationError("unknown modality '" + s + "' (expected ppg|ecg)");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ValidationError("unknown split '" + s + "' (expected train|val|test)");
}

ModalityConfig ModalityConfig::ppg() { return {Modality::Ppg, 4, 64, 8.0, 0.6}; }
ModalityConfig ModalityConfig::ecg() { return {Modality::Ecg, 1, 128, 8.0, 0.2}; }

std::size_t ModalityConfig::segment_length() const {
  return static_cast<std::size_t>(std::llround(sample_rate_hz * segment_seconds));
}

void ModalityConfig::validate() const {
  if (modality == Modality::Ppg && channels != 4) throw ValidationError("ppg corpora have 4 channels");
  if (modality == Modality::Ecg && channels != 1) throw ValidationError("ecg corpora have 1 channel");
  if (sample_rate_hz <= 0) throw ValidationError("sample_rate_hz must be positive");
  if (!(segment_seconds > 0)) throw ValidationError("segment_seconds must be positive");
  const double samples = sample_rate_hz * segment_seconds;
  if (std::abs(samples - std::round(samples)) > 1e-9) {
    throw ValidationError("sample_rate_hz * segment_seconds must be an integer sample count");
  }
  if (segment_length() < 16) throw ValidationError("segments must have at least 16 samples");
  if (!(within_participant_jitter >= 0.0 && within_participant_jitter <= 1.0)) {
    throw ValidationError("within_participant_jitter must be in [0,1]");
  }
}

void CorpusConfig::validate() const {
  modality.validate();
  if (n_participants < 10) {
    throw ValidationError("n_participants must be >= 10 (got " + std::to_string(n_participants) + ")");
  }
  if (segments_per_participant < 4) {
    throw ValidationError("segments_per_participant must be >= 4 (got " +
                          std::to_string(segments_per_participant) + ")");
  }
  if (!(train_fraction > 0 && val_fraction >= 0 && train_fraction + val_fraction < 1.0)) {
    throw ValidationError("split fractions must satisfy train > 0, val >= 0, train + val < 1");
  }
}

std::vector<const SegmentRecord*> Corpus::split_segments(Split split) const {
  std::vector<const SegmentRecord*> out;
  for (const auto& s : segments)
    if (s.split == split) out.push_back(&s);
  return out;
}

std::vector<int> Corpus::split_participants(Split split) const {
  std::vector<int> out;
  for (const auto& p : participants)
    if (split_of(p.participant_id) == split) out.push_back(p.participant_id);
  return out;
}

Split Corpus::split_of(int participant_id) const {
  const auto per = static_cast<std::size_t>(config.segments_per_participant);
  return segments.at(static_cast<std::size_t>(participant_id) * per).split;
}

namespace {

// Morphology parameters are multiplicative shape factors around 1.
constexpr std::array<double, kMorphologyParams> kMorphologySigma = {0.15, 0.15, 0.2, 0.12, 0.15, 0.15};
constexpr double kHrMean = 75.0;
constexpr double kHrStd = 50.0 / 3.4641016151377544;  // uniform[50,100]

double morph_z(const ParticipantLatent& p, int k) {
  return (p.morphology[k] - 1.0) / kMorphologySigma[k];
}

struct Pulse {
  double center, width, amplitude;
};

}  // namespace

ParticipantLatent sample_participant(std::uint64_t corpus_seed, int participant_id) {
  Rng rng = make_rng({corpus_seed, static_cast<std::uint64_t>(participant_id), 0xA11CEULL});
  ParticipantLatent p;
  p.participant_id = participant_id;
  p.base_heart_rate_bpm = uniform(rng, 50.0, 100.0);
  p.hr_variability = uniform(rng, 0.01, 0.05);
  for (int k = 0; k < kMorphologyParams; ++k) {
    p.morphology[k] = std::clamp(normal(rng, 1.0, kMorphologySigma[k]), 0.5, 1.5);
  }
  p.noise_level = uniform(rng, 0.05, 0.3);
  const double z_hr = (p.base_heart_rate_bpm - kHrMean) / kHrStd;
  p.pseudo_age = 50.0 - 12.0 * z_hr + 5.0 * morph_z(p, 0) + 4.0 * morph_z(p, 3) + normal(rng, 0.0, 1.5);
  p.pseudo_bmi = 25.0 + 3.0 * morph_z(p, 4) + 2.0 * morph_z(p, 2) + normal(rng, 0.0, 1.0);
  p.pseudo_sex = uniform(rng, 0.0, 1.0) < 1.0 / (1.0 + std::exp(-4.0 * morph_z(p, 1))) ? 1 : 0;
  return p;
}

std::uint64_t segment_seed(std::uint64_t corpus_seed, int participant_id, int segment_index) {
  return derive_seed({corpus_seed, static_cast<std::uint64_t>(participant_id),
                      static_cast<std::uint64_t>(segment_index), 0x5E6ULL});
}

Tensor<float> synthesize_segment(const ParticipantLatent& latent, const ModalityConfig& cfg,
                                 std::uint64_t seed) {
  Rng rng(seed);
  const double j = cfg.within_participant_jitter;
  const std::size_t L = cfg.segment_length();
  const std::size_t C = static_cast<std::size_t>(cfg.channels);
  const double fs = cfg.sample_rate_hz;
  const double duration = static_cast<double>(L) / fs;

  // Segment-level deviations from the participant's physiology; all vanish at j = 0.
  const double hr = std::clamp(latent.base_heart_rate_bpm * (1.0 + 0.06 * j * normal(rng)), 35.0, 140.0);
  const double amp = std::max(0.3, 1.0 + 0.3 * j * normal(rng));
  std::array<double, kMorphologyParams> m = latent.morphology;
  for (double& v : m) v = std::clamp(v * (1.0 + 0.1 * j * normal(rng)), 0.3, 1.8);
  const double rr_std = 2.0 * j * latent.hr_variability;
  const double rr0 = 60.0 / hr;
  const double phase = std::min(1.0, 2.0 * j) * uniform(rng, 0.0, 1.0) * rr0;
  const double drift_amp = 0.4 * j * std::abs(normal(rng));
  const double drift_freq = uniform(rng, 0.05, 0.3);
  const double drift_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  std::vector<Pulse> pulses;
  for (double t = -phase - rr0; t < duration + rr0;) {
    const double rr = rr0 * std::max(0.5, 1.0 + rr_std * normal(rng));
    const double s = std::sqrt(rr);
    if (cfg.modality == Modality::Ecg) {
      pulses.push_back({t - 0.16 * s, 0.025, 0.15 * m[2] * amp});
      pulses.push_back({t - 0.035, 0.008 * m[0], -0.12 * amp});
      pulses.push_back({t, 0.010 * m[0], 1.0 * m[5] * amp});
      pulses.push_back({t + 0.035, 0.010 * m[0], -0.25 * amp});
      pulses.push_back({t + 0.28 * m[3] * s, 0.06 * m[4], 0.3 * m[1] * amp});
    } else {
      const double sys = t + 0.15 * m[3] * s;
      pulses.push_back({sys, 0.07 * m[0], 1.0 * m[5] * amp});
      pulses.push_back({sys + 0.25 * m[1] * s, 0.12 * m[4], 0.5 * m[2] * m[5] * amp});
    }
    t += rr;
  }

  std::vector<double> base(L, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    const double t = static_cast<double>(i) / fs;
    double v = drift_amp * std::sin(2.0 * std::numbers::pi * drift_freq * t + drift_phase);
    for (const Pulse& p : pulses) {
      const double d = (t - p.center) / p.width;
      if (std::abs(d) < 8.0) v += p.amplitude * std::exp(-0.5 * d * d);
    }
    base[i] = v;
  }

  Tensor<float> out({C, L});
  std::vector<double> chan(L);
  for (std::size_t c = 0; c < C; ++c) {
    // Chest ECG is cleaner than optical PPG.
    const double noise = latent.noise_level * (cfg.modality == Modality::Ecg ? 0.4 : 1.0) *
                         (0.8 + 0.15 * static_cast<double>(c));
    const double gain = 1.0 + 0.1 * static_cast<double>(c);
    for (std::size_t i = 0; i < L; ++i) {
      chan[i] = gain * base[i] + (noise > 0.0 ? noise * normal(rng) : 0.0);
    }
    const double mean = std::accumulate(chan.begin(), chan.end(), 0.0) / static_cast<double>(L);
    double var = 0.0;
    for (double v : chan) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(L));
    for (std::size_t i = 0; i < L; ++i) {
      out.at(c, i) = static_cast<float>(sd > 0.0 ? (chan[i] - mean) / sd : 0.0);
    }
  }
  return out;
}

Corpus build_corpus(const CorpusConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.config = config;
  const int n = config.n_participants;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = make_rng({config.seed, 0x5B117ULL});
  std::shuffle(order.begin(), order.end(), split_rng);
  const int n_train = static_cast<int>(std::lround(config.train_fraction * n));
  const int n_val = static_cast<int>(std::lround(config.val_fraction * n));
  std::vector<Split> split(n, Split::Test);
  for (int i = 0; i < n; ++i) {
    split[order[i]] = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
  }

  corpus.participants.reserve(n);
  corpus.segments.reserve(static_cast<std::size_t>(n) * config.segments_per_participant);
  for (int pid = 0; pid < n; ++pid) {
    corpus.participants.push_back(sample_participant(config.seed, pid));
    for (int s = 0; s < config.segments_per_participant; ++s) {
      SegmentRecord rec;
      rec.segment_id = static_cast<int>(corpus.segments.size());
      rec.participant_id = pid;
      rec.split = split[pid];
      rec.samples = synthesize_segment(corpus.participants.back(), config.modality,
                                       segment_seed(config.seed, pid, s));
      corpus.segments.push_back(std::move(rec));
    }
  }
  return corpus;
}

namespace {

std::vector<std::uint8_t> segments_blob(const Corpus& corpus) {
  std::vector<std::uint8_t> blob;
  if (!corpus.segments.empty()) blob.reserve(corpus.segments.size() * corpus.segments[0].samples.size() * 4);
  for (const auto& s : corpus.segments) io::append_f32_le(blob, s.samples.data());
  return blob;
}

std::string index_csv(const Corpus& corpus) {
  std::ostringstream os;
  os << "segment_id,participant_id,split,byte_offset\n";
  std::size_t offset = 0;
  for (const auto& s : corpus.segments) {
    os << s.segment_id << ',' << s.participant_id << ',' << to_string(s.split) << ',' << offset << '\n';
    offset += s.samples.size() * sizeof(float);
  }
  return os.str();
}

const char* kLabelHeader =
    "participant_id,pseudo_age,pseudo_bmi,pseudo_sex,base_heart_rate_bpm,hr_variability,"
    "morph_0,morph_1,morph_2,morph_3,morph_4,morph_5,noise_level";

std::string labels_csv(const Corpus& corpus) {
  std::ostringstream os;
  os << kLabelHeader << '\n';
  for (const auto& p : corpus.participants) {
    os << p.participant_id << ',' << io::format_double(p.pseudo_age) << ','
       << io::format_double(p.pseudo_bmi) << ',' << p.pseudo_sex << ','
       << io::format_double(p.base_heart_rate_bpm) << ',' << io::format_double(p.hr_variability);
    for (double v : p.morphology) os << ',' << io::format_double(v);
    os << ',' << io::format_double(p.noise_level) << '\n';
  }
  return os.str();
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError("malformed number '" + s + "' in " + what);
  }
  return v;
}

long long parse_int(const std::string& s, const std::string& what) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError("malformed integer '" + s + "' in " + what);
  }
  return v;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& header,
                                                const std::string& what) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != header) throw IoError(what + ": unexpected header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    rows.push_back(io::split_csv_line(line));
  }
  return rows;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory " + dir.string() + ": " + ec.message());
  const auto blob = segments_blob(corpus);
  const std::string index = index_csv(corpus);
  const std::string labels = labels_csv(corpus);
  io::write_atomic(dir / "segments.bin", blob);
  io::write_atomic(dir / "index.csv", index);
  io::write_atomic(dir / "labels.csv", labels);

  const auto& c = corpus.config;
  nlohmann::ordered_json m;
  m["format"] = "biofm-corpus";
  m["version"] = kCorpusFormatVersion;
  m["config"] = to_json(c);
  m["segment_length"] = c.modality.segment_length();
  m["n_segments"] = corpus.segments.size();
  nlohmann::ordered_json counts;
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    counts[to_string(s)] = {{"participants", corpus.split_participants(s).size()},
                            {"segments", corpus.split_segments(s).size()}};
  }
  m["counts"] = counts;
  m["checksums"] = {{"segments.bin", io::crc32(blob)},
                    {"index.csv", io::crc32(index)},
                    {"labels.csv", io::crc32(labels)}};
  io::write_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

Corpus generate_corpus(const CorpusConfig& config, const std::filesystem::path& dir) {
  Corpus corpus = build_corpus(config);
  write_corpus(corpus, dir);
  corpus.checksums = {io::crc32(segments_blob(corpus)), io::crc32(index_csv(corpus)),
                      io::crc32(labels_csv(corpus))};
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw IoError("no corpus manifest in " + dir.string());
  }
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt corpus manifest: ") + e.what());
  }
  if (m.value("format", "") != "biofm-corpus") throw IoError("not a biofm corpus manifest");
  if (m.value("version", -1) != kCorpusFormatVersion) {
    throw IoError("unsupported corpus version " + m.value("version", nlohmann::json(-1)).dump());
  }
  Corpus corpus;
  try {
    corpus.config = corpus_config_from_json(m.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt corpus manifest: ") + e.what());
  }

  const auto blob = io::read_bytes(dir / "segments.bin");
  const std::string index = io::read_text(dir / "index.csv");
  const std::string labels = io::read_text(dir / "labels.csv");
  const auto& sums = m.at("checksums");
  auto check = [&](const char* name, std::uint32_t got) {
    if (sums.at(name).get<std::uint32_t>() != got) throw IoError(std::string("checksum mismatch for ") + name);
  };
  const std::size_t C = static_cast<std::size_t>(corpus.config.modality.channels);
  const std::size_t L = corpus.config.modality.segment_length();
  const std::size_t n_segments = m.at("n_segments").get<std::size_t>();
  if (blob.size() != n_segments * C * L * sizeof(float)) {
    throw IoError("segments.bin has " + std::to_string(blob.size()) + " bytes, expected " +
                  std::to_string(n_segments * C * L * sizeof(float)));
  }
  check("segments.bin", io::crc32(blob));
  check("index.csv", io::crc32(index));
  check("labels.csv", io::crc32(labels));
  corpus.checksums = {io::crc32(blob), io::crc32(index), io::crc32(labels)};

  for (const auto& row : parse_csv(labels, kLabelHeader, "labels.csv")) {
    if (row.size() != 13) throw IoError("labels.csv: wrong column count");
    ParticipantLatent p;
    p.participant_id = static_cast<int>(parse_int(row[0], "labels.csv"));
    p.pseudo_age = parse_double(row[1], "labels.csv");
    p.pseudo_bmi = parse_double(row[2], "labels.csv");
    p.pseudo_sex = static_cast<int>(parse_int(row[3], "labels.csv"));
    p.base_heart_rate_bpm = parse_double(row[4], "labels.csv");
    p.hr_variability = parse_double(row[5], "labels.csv");
    for (int k = 0; k < kMorphologyParams; ++k) p.morphology[k] = parse_double(row[6 + k], "labels.csv");
    p.noise_level = parse_double(row[12], "labels.csv");
    corpus.participants.push_back(p);
  }

  const auto rows = parse_csv(index, "segment_id,participant_id,split,byte_offset", "index.csv");
  if (rows.size() != n_segments) throw IoError("index.csv row count does not match manifest");
  corpus.segments.reserve(rows.size());
  for (const auto& row : rows) {
    if (row.size() != 4) throw IoError("index.csv: wrong column count");
    SegmentRecord rec;
    rec.segment_id = static_cast<int>(parse_int(row[0], "index.csv"));
    rec.participant_id = static_cast<int>(parse_int(row[1], "index.csv"));
    rec.split = split_from_string(row[2]);
    const auto offset = static_cast<std::size_t>(parse_int(row[3], "index.csv"));
    rec.samples = Tensor<float>({C, L});
    io::read_f32_le(blob, offset, rec.samples.data());
    corpus.segments.push_back(std::move(rec));
  }
  return corpus;
}

}  // namespace biofm
