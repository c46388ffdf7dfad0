#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "fgns/commands.hpp"
#include "fgns/config.hpp"
#include "fgns/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Feature-guided neighbor selection: example-based explanations for image classifiers"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "JSON run configuration (defaults apply to missing keys)");
    app.add_option("-s,--set", overrides, "Override a config key, e.g. --set pipeline.rho=2.0")->take_all();

    auto* train = app.add_subcommand("train", "Train and save the reference classifier");
    auto* build = app.add_subcommand("build-features", "Build the class feature catalog and prototypes");

    auto* explain = app.add_subcommand("explain", "Explain one test instance and render its panel");
    fgns::ExplainRequest ex_req;
    std::string method = "fgns";
    explain->add_option("-q,--query-id", ex_req.query_id, "Test-split id of the query")->required();
    explain->add_option("-m,--method", method, "fgns or knn_baseline")->check(CLI::IsMember({"fgns", "knn_baseline", "knn"}));
    explain->add_flag("--overlay", ex_req.overlay, "Tint the predicted class's catalog masks");
    explain->add_option("--format", ex_req.image_format, "Panel encoding")->check(CLI::IsMember({"png", "pgm"}));

    auto* evaluate = app.add_subcommand("evaluate", "Compare FGNS and baseline neighbor distances");

    auto* render = app.add_subcommand("render", "Render a panel from a saved explanation record");
    fgns::RenderRequest r_req;
    render->add_option("-e,--explanation", r_req.explanation, "Explanation JSON")->required();
    render->add_option("-o,--out", r_req.output, "Output image (.png, .pgm or .ppm)")->required();
    render->add_flag("--overlay", r_req.overlay, "Tint the predicted class's catalog masks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : fgns::kExitInputError;
    }

    fgns::RunConfig cfg;
    try {
        cfg = config_path.empty() ? fgns::RunConfig::from_json(nlohmann::json::object(), overrides)
                                  : fgns::RunConfig::load(config_path, overrides);
    } catch (const fgns::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return fgns::kExitInputError;
    }

    if (*train) return fgns::cmd_train(cfg, std::cout, std::cerr);
    if (*build) return fgns::cmd_build_features(cfg, std::cout, std::cerr);
    if (*explain) {
        ex_req.method = fgns::method_from_string(method);
        return fgns::cmd_explain(cfg, ex_req, std::cout, std::cerr);
    }
    if (*evaluate) return fgns::cmd_evaluate(cfg, std::cout, std::cerr);
    if (*render) return fgns::cmd_render(cfg, r_req, std::cout, std::cerr);
    return fgns::kExitInputError;
}
