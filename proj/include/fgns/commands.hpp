#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "fgns/config.hpp"
#include "fgns/neighbors.hpp"

namespace fgns {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitInputError = 2,
    kExitDivergence = 3,
    kExitChecksumMismatch = 4,
    kExitInsufficientData = 5,
};

/// Artifact locations inside the output directory.
struct ArtifactPaths {
    std::filesystem::path model;
    std::filesystem::path catalog;
    std::filesystem::path prototypes;
    std::filesystem::path explanations;
    std::filesystem::path report_json;
    std::filesystem::path report_text;
    std::filesystem::path histogram_csv;

    static ArtifactPaths in(const std::filesystem::path& dir);
};

struct ExplainRequest {
    std::size_t query_id = 0;
    Method method = Method::fgns;
    bool overlay = false;
    std::string image_format = "png";  ///< png or pgm
};

struct RenderRequest {
    std::filesystem::path explanation;
    std::filesystem::path output;
    bool overlay = false;
};

// Each command reports progress on `out`, problems on `err`, and returns an ExitCode.
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_build_features(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_explain(const RunConfig& cfg, const ExplainRequest& req, std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_render(const RunConfig& cfg, const RenderRequest& req, std::ostream& out, std::ostream& err);

/// Maps a library exception to its exit code.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace fgns
