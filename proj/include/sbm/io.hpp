#pragma once

// File formats:
//   params   JSON {"q": int, "alpha": [...], "pi": [[...], ...]}
//   graph    "n=<int> q=<int>" header, one "i<TAB>j" line per directed edge
//            (1-based), then optionally "labels:" followed by n integers
//   fit      JSON {"alpha", "pi", "j_final", "trace", "restarts_used", "converged", ...}
//   moments  JSON {"q", "u", "U", "d", "source", ...}
// Every floating-point number is written with 17 significant digits.

#include "sbm/exact.hpp"
#include "sbm/model.hpp"
#include "sbm/moments.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>

namespace sbm::io {

using nlohmann::json;

// %.17g; non-finite values become "inf", "-inf" or "nan".
std::string format_double(double v);

// Serializes with 17-digit numbers; non-finite numbers become null.
std::string dump(const json& j, int indent = 2);

json params_to_json(const SbmParams& p);
SbmParams params_from_json(const json& j);
SbmParams read_params(const std::string& path);
void write_params(const std::string& path, const SbmParams& p);

void write_graph(std::ostream& os, const LabeledGraph& g);
LabeledGraph read_graph(std::istream& is);
void write_graph(const std::string& path, const LabeledGraph& g);
LabeledGraph read_graph(const std::string& path);

// Whitespace separated 1-based labels, or a graph file carrying a labels section.
Labels read_labels(const std::string& path);

json fit_to_json(const FitResult& fit, const std::string& method);
// Fitted parameters from a fit file; validation is relaxed to allow empty classes.
SbmParams fit_params_from_json(const json& j);

json moments_to_json(const MomentSet& m);
MomentSet moments_from_json(const json& j);
json recovery_to_json(const RecoveryResult& r);

// "labels,probability" rows in index order.
void write_posterior_csv(std::ostream& os, const PosteriorTable& t);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace sbm::io
