#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace delst::cli {

/// Process exit codes of every subcommand.
enum class Exit : int { ok = 0, usage = 1, data = 2, numerical = 3 };

inline constexpr std::string_view kVersion = "0.1.0";

inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kPanelFile = "panel.json";
inline constexpr std::string_view kCheckpointFile = "checkpoint.bin";
inline constexpr std::string_view kHistoryFile = "history.tsv";
inline constexpr std::string_view kEmbeddingFile = "embeddings.tsv";
inline constexpr std::string_view kProbeFile = "probe.tsv";
inline constexpr std::string_view kDiagnosticsFile = "diagnostics.tsv";
inline constexpr std::string_view kGradcheckFile = "gradcheck.tsv";

/// Parses `args` (without the program name) and runs one subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace delst::cli
