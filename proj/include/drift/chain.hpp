#pragma once

#include <iosfwd>

#include "drift/birkhoff.hpp"

namespace drift {

enum class LinkKind { Heteroclinic, Transition };

// Link between consecutive annuli: a heteroclinic local diffeomorphism or a
// flow-induced transition map. Transitions expand to a single FLOW entry.
struct ChainLink {
  LinkKind kind = LinkKind::Transition;
  Region domain;   // in annulus k (continuation coordinates)
  Region image;    // in annulus k+1
  std::function<Point(const Point&)> fwd;
  std::function<Point(const Point&)> inv;
  std::function<double(const Point&)> transit_time;
  std::string label;

  double tau(const Point& p) const { return transit_time ? transit_time(p) : 0.0; }
};

struct AnnulusSystem {
  AnnulusMap map;
  Polysystem poly;
  std::vector<CertifiedCircle> catalog;
  std::vector<BirkhoffZone> zones;
};

struct ChainCheckEntry {
  size_t link = 0;
  bool ok = false;
  double mesh_radius = 0.0;     // neighborhood size at which the hit was found
  size_t circle_index = 0;      // delta-close minimal circle that was hit
};

struct Chain {
  std::vector<AnnulusSystem> systems;
  std::vector<ChainLink> links;
  double delta = 0.05;
  std::vector<ChainCheckEntry> link_report;
};

// Symbols of the chain polysystem: per-annulus Phi/PhiInv/Corr plus links.
struct ChainSymbol {
  enum Kind { Phi, PhiInv, Corr, Link } kind = Phi;
  int annulus = 0;  // index of the annulus the symbol acts in
  int index = -1;   // correspondence id, or link index

  bool is_phi_like() const { return kind == Phi || kind == PhiInv; }
  bool operator==(const ChainSymbol&) const = default;
};

struct ChainWord {
  std::vector<ChainSymbol> symbols;
  std::string text() const;
  static ChainWord parse(const std::string& text);
};

struct TaggedPoint {
  Point p;
  int annulus = 0;
};

// Per-circle proximity record: min distance achieved by orbit points of the
// circle's annulus to the circle.
struct ProximityRecord {
  struct Entry {
    int annulus;
    size_t circle;
    double min_dist;
  };
  std::vector<Entry> entries;
  double worst() const;
};

struct PseudoOrbit {
  std::vector<TaggedPoint> points;  // n*+1 points
  ChainWord word;                   // n* symbols
  ProximityRecord proximity;

  size_t length() const { return word.symbols.size(); }
};

// Replays the word from the orbit's initial point through the chain systems
// and links; returns the max pointwise mismatch.
double replay_error(const Chain& chain, const PseudoOrbit& orbit);

// Word form of isolated non-phi symbols: no two adjacent non-phi symbols and
// every non-phi symbol preceded by at least one Phi.
bool has_isolated_jumps(const ChainWord& word);

struct ItineraryEntry {
  enum Kind { Flow, Jump } kind = Flow;
  double duration = 0.0;   // FLOW
  std::string jump_id;     // JUMP: correspondence / link label
};

struct Itinerary {
  std::vector<ItineraryEntry> entries;
  std::vector<size_t> index_map;  // j_n: position of pseudo-orbit point x_n
};

// Chain assembly ---------------------------------------------------------

class ChainConfig;  // config.hpp

Chain build_chain(const ChainConfig& config, bool strict = false);

enum class DriftMode { Constructive, Symmetrized };

struct DriftOptions {
  DriftMode mode = DriftMode::Constructive;
  CoherentOptions coherent;
  long long budget = 10000000;
  std::optional<Region> avoid;    // per corollary on singular cylinders
  double link_mesh_floor = 1e-3;  // smallest splice neighborhood probed
};

struct DriftOutcome {
  PseudoOrbit orbit;
  long long evals = 0;
  std::vector<CoherentSequence> sequences;  // one per annulus (constructive mode)
};

// Builds a delta-admissible pseudo-orbit along the chain from the start
// region in annulus 1, splicing per-annulus climbs across the links.
Search<DriftOutcome> drift(const Chain& chain, const Region& start, const DriftOptions& opts = {});

// Expands a pseudo-orbit into the flow/jump itinerary with the P1 index map;
// FLOW entries of zero duration collapse into the adjacent jump.
Itinerary expand_itinerary(const Chain& chain, const PseudoOrbit& orbit,
                           double return_time = 1.0);

// Serialization -----------------------------------------------------------

enum class ExportFormat { PointsCsv, WordText, RecordsJsonl };

void export_orbit(const Chain& chain, const PseudoOrbit& orbit, ExportFormat format,
                  std::ostream& out);
void export_itinerary(const Itinerary& itinerary, std::ostream& out);

PseudoOrbit import_orbit(std::istream& points_csv, std::istream& word_text);

void export_circle(const CertifiedCircle& circle, std::ostream& line_out,
                   std::ostream& samples_out, const std::string& samples_ref);

}  // namespace drift
