#include "tfm/target_sim.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <cctype>
#include <set>
#include <sstream>

#include "tfm/errors.hpp"

namespace tfm {

namespace {

Matrix identity(std::size_t n) {
    Matrix m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
    return m;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
    const std::size_t n = a.size();
    Matrix out(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            if (a[i][k] == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i][j] += a[i][k] * b[k][j];
        }
    }
    return out;
}

Matrix power(const Matrix& m, int exponent) {
    Matrix out = identity(m.size());
    for (int i = 0; i < exponent; ++i) out = multiply(out, m);
    return out;
}

/// Transition mass restricted to paths that never enter the unsafe set.
Matrix safe_restriction(const ScenarioWorld& world) {
    Matrix q = world.transition();
    for (std::size_t i = 0; i < world.size(); ++i) {
        for (std::size_t j = 0; j < world.size(); ++j) {
            if (world.is_unsafe(i) || world.is_unsafe(j)) q[i][j] = 0.0;
        }
    }
    return q;
}

void check_endpoints(const ScenarioWorld& world, std::size_t start, std::size_t end, int steps) {
    if (steps < 2) throw PreconditionError("bridge needs T >= 2, got " + std::to_string(steps));
    if (start >= world.size() || end >= world.size()) throw PreconditionError("state index out of range");
}

std::vector<Anchor> normalize_anchors(const ScenarioWorld& world, std::span<const Anchor> anchors, int steps) {
    if (steps < 2) throw PreconditionError("bridge needs T >= 2, got " + std::to_string(steps));
    std::vector<Anchor> sorted(anchors.begin(), anchors.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Anchor& a, const Anchor& b) { return a.position < b.position; });
    std::vector<Anchor> out;
    for (const auto& a : sorted) {
        if (a.position < 1 || a.position > steps) throw PreconditionError("anchor position out of range");
        if (a.state >= world.size()) throw PreconditionError("anchor state out of range");
        if (!out.empty() && out.back().position == a.position) {
            if (out.back().state != a.state) {
                throw UnreachableEndpoint("conflicting anchors at step " + std::to_string(a.position));
            }
            continue;
        }
        out.push_back(a);
    }
    if (out.empty() || out.front().position != 1 || out.back().position != steps) {
        throw PreconditionError("anchors must pin both step 1 and step T");
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// World

ScenarioWorld::ScenarioWorld(std::string name, std::string version, std::vector<WorldState> states,
                             Matrix transition, std::map<std::string, std::size_t> term_map,
                             std::size_t neutral_state)
    : name_(std::move(name)),
      version_(std::move(version)),
      states_(std::move(states)),
      transition_(std::move(transition)),
      neutral_state_(neutral_state) {
    const std::size_t n = states_.size();
    if (n == 0) throw InvalidWorld("world has no states");
    std::set<std::string> ids;
    for (const auto& s : states_) {
        if (!ids.insert(s.id).second) throw InvalidWorld("duplicate state id '" + s.id + "'");
    }
    if (transition_.size() != n) throw InvalidWorld("transition matrix must have one row per state");
    for (std::size_t i = 0; i < n; ++i) {
        if (transition_[i].size() != n) throw InvalidWorld("transition row " + states_[i].id + " has wrong width");
        double sum = 0.0;
        for (double p : transition_[i]) {
            if (!(p >= 0.0) || p > 1.0) throw InvalidWorld("transition probability outside [0,1] in row " + states_[i].id);
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw InvalidWorld("transition row " + states_[i].id + " sums to " + std::to_string(sum));
        }
    }
    if (neutral_state_ >= n) throw InvalidWorld("neutral state out of range");
    for (auto& [term, state] : term_map) {
        if (state >= n) throw InvalidWorld("term '" + term + "' maps to an unknown state");
        const std::string key = normalize_term(term);
        if (key.empty()) throw InvalidWorld("term map entry '" + term + "' has no units");
        term_map_[key] = state;
        max_term_units_ = std::max(max_term_units_, tokenize(key).size());
    }
}

ScenarioWorld ScenarioWorld::from_json(const nlohmann::json& doc) {
    try {
        std::vector<WorldState> states;
        std::map<std::string, std::size_t> ids;
        for (const auto& s : doc.at("states")) {
            WorldState ws;
            ws.id = s.at("id").get<std::string>();
            ws.descriptor = s.value("descriptor", ws.id);
            ws.unsafe = s.value("unsafe", false);
            ids.emplace(ws.id, states.size());
            states.push_back(std::move(ws));
        }
        auto index = [&](const std::string& id) {
            auto it = ids.find(id);
            if (it == ids.end()) throw InvalidWorld("unknown state '" + id + "'");
            return it->second;
        };
        const std::size_t n = states.size();
        Matrix transition(n, std::vector<double>(n, 0.0));
        const auto& t = doc.at("transition");
        if (t.is_array()) {
            transition = t.get<Matrix>();
        } else {
            for (const auto& [from, row] : t.items()) {
                for (const auto& [to, p] : row.items()) transition[index(from)][index(to)] = p.get<double>();
            }
        }
        std::map<std::string, std::size_t> term_map;
        const nlohmann::json terms = doc.value("term_map", nlohmann::json::object());
        for (const auto& [term, state] : terms.items()) {
            term_map[term] = index(state.get<std::string>());
        }
        const std::size_t neutral = index(doc.at("neutral_state").get<std::string>());
        return ScenarioWorld(doc.value("name", "world"), doc.value("version", "0"), std::move(states),
                             std::move(transition), std::move(term_map), neutral);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidWorld(e.what());
    }
}

ScenarioWorld ScenarioWorld::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidWorld(path.string() + ": " + e.what());
    }
}

bool ScenarioWorld::has_unsafe_states() const {
    return std::any_of(states_.begin(), states_.end(), [](const WorldState& s) { return s.unsafe; });
}

std::size_t ScenarioWorld::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < states_.size(); ++i) {
        if (states_[i].id == id) return i;
    }
    throw InvalidWorld("unknown state '" + std::string(id) + "'");
}

std::size_t ScenarioWorld::map_text(std::string_view text) const {
    const TokenSequence tokens = tokenize(text);
    std::optional<std::size_t> best_state;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        std::string key;
        for (std::size_t len = 1; len <= max_term_units_ && i + len <= tokens.size(); ++len) {
            if (len > 1) key += ' ';
            key += tokens.units[i + len - 1].normalized;
            auto it = term_map_.find(key);
            // Strictly longer wins; scanning left to right keeps the leftmost on ties.
            if (it != term_map_.end() && len > best_len) {
                best_len = len;
                best_state = it->second;
            }
        }
    }
    return best_state.value_or(neutral_state_);
}

// ---------------------------------------------------------------------------
// Profiles

void FilterProfile::validate() const {
    if (name.empty()) throw ConfigError("filter profile without a name");
    if (!(post_detect >= 0.0 && post_detect <= 1.0)) throw ConfigError(name + ": post detect must lie in [0,1]");
    if (!(tau >= 0.0)) throw ConfigError(name + ": tau must be >= 0");
    if (pre_kind == PreKind::Logistic && !(k > 0.0)) throw ConfigError(name + ": logistic k must be > 0");
}

FilterProfile FilterProfile::from_json(const nlohmann::json& doc) {
    try {
        FilterProfile p;
        p.name = doc.at("name").get<std::string>();
        if (doc.contains("pre") && !doc["pre"].is_null()) {
            const auto& pre = doc["pre"];
            p.pre_enabled = true;
            const std::string kind = pre.at("kind").get<std::string>();
            if (kind == "threshold") {
                p.pre_kind = PreKind::Threshold;
            } else if (kind == "logistic") {
                p.pre_kind = PreKind::Logistic;
                p.k = pre.at("k").get<double>();
            } else {
                throw ConfigError(p.name + ": unknown pre-filter kind '" + kind + "'");
            }
            p.tau = pre.at("tau").get<double>();
        }
        if (doc.contains("post") && !doc["post"].is_null()) {
            p.post_enabled = true;
            p.post_detect = doc["post"].at("detect").get<double>();
        }
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("filter profile: ") + e.what());
    }
}

nlohmann::json FilterProfile::to_json() const {
    nlohmann::json out{{"name", name}, {"pre", nullptr}, {"post", nullptr}};
    if (pre_enabled) {
        out["pre"] = pre_kind == PreKind::Threshold ? nlohmann::json{{"kind", "threshold"}, {"tau", tau}}
                                                    : nlohmann::json{{"kind", "logistic"}, {"k", k}, {"tau", tau}};
    }
    if (post_enabled) out["post"] = {{"detect", post_detect}};
    return out;
}

ProfileSet ProfileSet::from_json(const nlohmann::json& doc) {
    ProfileSet set;
    set.version = doc.value("version", "0");
    if (!doc.contains("profiles") || !doc["profiles"].is_array()) throw ConfigError("profile file needs 'profiles'");
    for (const auto& p : doc["profiles"]) set.profiles.push_back(FilterProfile::from_json(p));
    return set;
}

ProfileSet ProfileSet::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

const FilterProfile& ProfileSet::find(std::string_view name) const {
    for (const auto& p : profiles) {
        if (p.name == name) return p;
    }
    throw ConfigError("unknown profile '" + std::string(name) + "'");
}

double pre_block_probability(double risk, const FilterProfile& profile) {
    if (!profile.pre_enabled) return 0.0;
    if (profile.pre_kind == PreKind::Threshold) return risk > profile.tau ? 1.0 : 0.0;
    return 1.0 / (1.0 + std::exp(-profile.k * (risk - profile.tau)));
}

PreDecision pre_filter(std::string_view text, const FilterProfile& profile, const Lexicon& lexicon, Rng& rng) {
    const double p = pre_block_probability(text_risk(text, lexicon), profile);
    // One draw per call regardless of kind keeps downstream draws aligned.
    const double u = rng.uniform();
    return u < p ? PreDecision::Block : PreDecision::Pass;
}

// ---------------------------------------------------------------------------
// Anchors

std::pair<std::size_t, std::size_t> map_boundary_to_states(const BoundaryPrompt& prompt,
                                                           const ScenarioWorld& world) {
    return {world.map_text(prompt.first().text()), world.map_text(prompt.last().text())};
}

namespace {

int scale_position(int index, int origin, int steps) {
    if (origin <= 1) return 1;
    const double x = 1.0 + static_cast<double>(index - 1) * (steps - 1) / (origin - 1);
    return std::clamp(static_cast<int>(std::lround(x)), 1, steps);
}

std::vector<Anchor> pin_ends(std::vector<Anchor> anchors, int steps) {
    std::stable_sort(anchors.begin(), anchors.end(),
                     [](const Anchor& a, const Anchor& b) { return a.position < b.position; });
    std::vector<Anchor> out;
    for (const auto& a : anchors) {
        if (!out.empty() && out.back().position == a.position) continue;  // first description wins
        out.push_back(a);
    }
    if (out.front().position != 1) out.insert(out.begin(), Anchor{1, out.front().state});
    if (out.back().position != steps) out.push_back(Anchor{steps, out.back().state});
    return out;
}

std::string strip_clause(std::string_view s) {
    std::string t = trim(s);
    while (!t.empty() && (t.back() == '.' || std::isspace(static_cast<unsigned char>(t.back())))) t.pop_back();
    return t;
}

}  // namespace

std::vector<Anchor> anchors_from_text(std::string_view text, const ScenarioWorld& world, int steps) {
    if (steps < 2) throw PreconditionError("need at least two latent steps");
    static const std::regex marker(R"(^\s*[Ff]rame\s+(\d+)\s*:(.*)$)");

    std::vector<std::pair<int, std::string>> marked;
    {
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) {
            std::smatch m;
            if (std::regex_match(line, m, marker) && !trim(m[2].str()).empty()) {
                marked.emplace_back(std::stoi(m[1].str()), m[2].str());
            }
        }
    }
    if (!marked.empty()) {
        int max_index = 1;
        for (const auto& [k, _] : marked) max_index = std::max(max_index, k);
        std::vector<Anchor> anchors;
        for (const auto& [k, desc] : marked) {
            anchors.push_back({scale_position(k, max_index, steps), world.map_text(desc)});
        }
        return pin_ends(std::move(anchors), steps);
    }

    const std::string_view kFirst = "First frame:";
    const std::string_view kMiddle = "Middle frame:";
    const std::string_view kLast = "Last frame:";
    const auto first_pos = text.find(kFirst);
    const auto last_pos = text.find(kLast);
    if (first_pos != std::string_view::npos && last_pos != std::string_view::npos && first_pos < last_pos) {
        const auto middle_pos = text.find(kMiddle, first_pos);
        const bool has_middle = middle_pos != std::string_view::npos && middle_pos < last_pos;
        const auto first_end = has_middle ? middle_pos : last_pos;
        const std::string first = strip_clause(text.substr(first_pos + kFirst.size(), first_end - first_pos - kFirst.size()));
        const std::string last = strip_clause(text.substr(last_pos + kLast.size()));
        std::vector<Anchor> anchors{{1, world.map_text(first)}, {steps, world.map_text(last)}};
        if (has_middle && steps >= 3) {
            const std::string middle = strip_clause(
                text.substr(middle_pos + kMiddle.size(), last_pos - middle_pos - kMiddle.size()));
            anchors.insert(anchors.begin() + 1, Anchor{(steps + 1) / 2, world.map_text(middle)});
        }
        return anchors;
    }

    const std::size_t s = world.map_text(text);
    return {{1, s}, {steps, s}};
}

std::vector<Anchor> anchors_from_boundary(const BoundaryPrompt& prompt, const ScenarioWorld& world, int steps) {
    if (steps < 2) throw PreconditionError("need at least two latent steps");
    std::vector<Anchor> anchors{{1, world.map_text(prompt.first().text())}};
    if (prompt.middle() && steps >= 3) {
        const int pos = scale_position(prompt.middle()->index(), prompt.origin_frames(), steps);
        if (pos > 1 && pos < steps) anchors.push_back({pos, world.map_text(prompt.middle()->text())});
    }
    anchors.push_back({steps, world.map_text(prompt.last().text())});
    return anchors;
}

// ---------------------------------------------------------------------------
// Bridges

BridgeDistribution::BridgeDistribution(const ScenarioWorld& world, std::size_t start, std::size_t end, int steps)
    : n_(world.size()), start_(start), end_(end), steps_(steps) {
    check_endpoints(world, start, end, steps);
    const Matrix& p = world.transition();
    // beta[t][s] = P(z_T = end | z_t = s), t = 1..T (index t - 1).
    std::vector<std::vector<double>> beta(static_cast<std::size_t>(steps), std::vector<double>(n_, 0.0));
    beta[static_cast<std::size_t>(steps - 1)][end] = 1.0;
    for (int t = steps - 1; t >= 1; --t) {
        const auto& next = beta[static_cast<std::size_t>(t)];
        auto& cur = beta[static_cast<std::size_t>(t - 1)];
        for (std::size_t i = 0; i < n_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n_; ++j) acc += p[i][j] * next[j];
            cur[i] = acc;
        }
    }
    pinning_ = beta[0][start];
    if (!(pinning_ > 0.0)) {
        throw UnreachableEndpoint(world.state(end).id + " cannot be reached from " + world.state(start).id + " in " +
                                  std::to_string(steps - 1) + " steps");
    }
    for (int t = 2; t <= steps - 1; ++t) {
        Matrix table(n_, std::vector<double>(n_, 0.0));
        const auto& prev_beta = beta[static_cast<std::size_t>(t - 2)];
        const auto& cur_beta = beta[static_cast<std::size_t>(t - 1)];
        for (std::size_t i = 0; i < n_; ++i) {
            if (!(prev_beta[i] > 0.0)) continue;
            for (std::size_t j = 0; j < n_; ++j) table[i][j] = p[i][j] * cur_beta[j] / prev_beta[i];
        }
        tables_.push_back(std::move(table));
    }
}

double BridgeDistribution::conditional(int t, std::size_t prev, std::size_t next) const {
    if (t < 2 || t > steps_ - 1) throw PreconditionError("conditional defined for 2 <= t <= T-1");
    return tables_[static_cast<std::size_t>(t - 2)].at(prev).at(next);
}

double BridgeDistribution::trajectory_probability(std::span<const std::size_t> intermediate) const {
    if (intermediate.size() != static_cast<std::size_t>(steps_ - 2)) {
        throw PreconditionError("trajectory must list T-2 intermediate states");
    }
    double prob = 1.0;
    std::size_t prev = start_;
    for (std::size_t k = 0; k < intermediate.size(); ++k) {
        prob *= tables_[k].at(prev).at(intermediate[k]);
        prev = intermediate[k];
    }
    return prob;
}

std::vector<double> BridgeDistribution::marginal(int t) const {
    if (t < 1 || t > steps_) throw PreconditionError("marginal step out of range");
    std::vector<double> dist(n_, 0.0);
    if (t == steps_) {
        dist[end_] = 1.0;
        return dist;
    }
    dist[start_] = 1.0;
    for (int s = 2; s <= t; ++s) {
        std::vector<double> next(n_, 0.0);
        const auto& table = tables_[static_cast<std::size_t>(s - 2)];
        for (std::size_t i = 0; i < n_; ++i) {
            if (dist[i] == 0.0) continue;
            for (std::size_t j = 0; j < n_; ++j) next[j] += dist[i] * table[i][j];
        }
        dist = std::move(next);
    }
    return dist;
}

std::vector<std::size_t> BridgeDistribution::sample(Rng& rng) const {
    std::vector<std::size_t> path{start_};
    for (const auto& table : tables_) path.push_back(rng.categorical(table[path.back()]));
    path.push_back(end_);
    return path;
}

BridgeDistribution bridge_distribution(const ScenarioWorld& world, std::size_t start, std::size_t end, int steps) {
    return BridgeDistribution(world, start, end, steps);
}

double unsafe_probability(const ScenarioWorld& world, std::size_t start, std::size_t end, int steps) {
    const Anchor anchors[] = {{1, start}, {steps, end}};
    return unsafe_probability(world, anchors, steps);
}

double unsafe_probability(const ScenarioWorld& world, std::span<const Anchor> anchors, int steps) {
    const auto pins = normalize_anchors(world, anchors, steps);
    const Matrix& p = world.transition();
    const Matrix q = safe_restriction(world);
    bool pinned_unsafe = false;
    double avoid = 1.0;
    for (std::size_t k = 0; k + 1 < pins.size(); ++k) {
        const auto& a = pins[k];
        const auto& b = pins[k + 1];
        const int hops = b.position - a.position;
        const double full = power(p, hops)[a.state][b.state];
        if (!(full > 0.0)) {
            throw UnreachableEndpoint(world.state(b.state).id + " cannot be reached from " + world.state(a.state).id +
                                      " in " + std::to_string(hops) + " steps");
        }
        if (world.is_unsafe(a.state) || world.is_unsafe(b.state)) pinned_unsafe = true;
        if (!pinned_unsafe) avoid *= std::clamp(power(q, hops)[a.state][b.state] / full, 0.0, 1.0);
    }
    return pinned_unsafe ? 1.0 : 1.0 - avoid;
}

double brute_force_unsafe_probability(const ScenarioWorld& world, std::size_t start, std::size_t end, int steps) {
    const Anchor anchors[] = {{1, start}, {steps, end}};
    return brute_force_unsafe_probability(world, anchors, steps);
}

double brute_force_unsafe_probability(const ScenarioWorld& world, std::span<const Anchor> anchors, int steps) {
    const auto pins = normalize_anchors(world, anchors, steps);
    const std::size_t n = world.size();
    std::vector<std::optional<std::size_t>> fixed(static_cast<std::size_t>(steps));
    for (const auto& a : pins) fixed[static_cast<std::size_t>(a.position - 1)] = a.state;
    std::vector<std::size_t> free_slots;
    for (std::size_t t = 0; t < fixed.size(); ++t) {
        if (!fixed[t]) free_slots.push_back(t);
    }
    double count = 1.0;
    for (std::size_t i = 0; i < free_slots.size(); ++i) count *= static_cast<double>(n);
    if (count > 1e6) throw TooLarge(std::to_string(static_cast<long long>(count)) + " trajectories to enumerate");

    std::vector<std::size_t> path(static_cast<std::size_t>(steps));
    for (std::size_t t = 0; t < fixed.size(); ++t) path[t] = fixed[t].value_or(0);
    const Matrix& p = world.transition();
    double total = 0.0;
    double unsafe = 0.0;
    const auto combos = static_cast<std::size_t>(count);
    for (std::size_t c = 0; c < combos; ++c) {
        std::size_t code = c;
        for (std::size_t slot : free_slots) {
            path[slot] = code % n;
            code /= n;
        }
        double w = 1.0;
        for (std::size_t t = 0; t + 1 < path.size() && w > 0.0; ++t) w *= p[path[t]][path[t + 1]];
        if (w == 0.0) continue;
        total += w;
        if (std::any_of(path.begin(), path.end(), [&](std::size_t s) { return world.is_unsafe(s); })) unsafe += w;
    }
    if (!(total > 0.0)) throw UnreachableEndpoint("no trajectory satisfies the anchors");
    return unsafe / total;
}

std::vector<std::size_t> sample_trajectory(const ScenarioWorld& world, std::span<const Anchor> anchors, int steps,
                                           Rng& rng) {
    const auto pins = normalize_anchors(world, anchors, steps);
    std::vector<std::size_t> path{pins.front().state};
    for (std::size_t k = 0; k + 1 < pins.size(); ++k) {
        const auto& a = pins[k];
        const auto& b = pins[k + 1];
        const BridgeDistribution bridge(world, a.state, b.state, b.position - a.position + 1);
        const auto segment = bridge.sample(rng);
        path.insert(path.end(), segment.begin() + 1, segment.end());
    }
    return path;
}

// ---------------------------------------------------------------------------
// Generation

bool SimVideo::has_unsafe_frame() const {
    return std::any_of(frames.begin(), frames.end(), [](const SimFrame& f) { return f.unsafe; });
}

nlohmann::json SimVideo::to_json() const {
    nlohmann::json fs = nlohmann::json::array();
    for (const auto& f : frames) {
        fs.push_back({{"t", f.timestamp}, {"descriptor", f.descriptor}, {"unsafe", f.unsafe}, {"state", f.state}});
    }
    return {{"duration", duration}, {"trajectory", trajectory}, {"frames", fs}};
}

SimVideo SimVideo::from_json(const nlohmann::json& doc) {
    SimVideo v;
    v.duration = doc.at("duration").get<double>();
    v.trajectory = doc.value("trajectory", std::vector<std::size_t>{});
    for (const auto& f : doc.at("frames")) {
        v.frames.push_back({f.at("t").get<double>(), f.value("descriptor", ""), f.at("unsafe").get<bool>(),
                            f.value("state", std::size_t{0})});
    }
    return v;
}

int GenerationOptions::steps() const {
    const auto s = static_cast<int>(std::lround(duration * states_per_second));
    if (s < 2) throw PreconditionError("generation needs at least two latent states");
    return s;
}

std::string to_string(GenerationOutcome::Kind kind) {
    switch (kind) {
        case GenerationOutcome::Kind::Video: return "video";
        case GenerationOutcome::Kind::BlockedPre: return "blocked_pre";
        case GenerationOutcome::Kind::BlockedPost: return "blocked_post";
        case GenerationOutcome::Kind::Failed: return "failed";
    }
    return "failed";
}

GenerationOutcome::Kind parse_generation_kind(std::string_view text) {
    if (text == "video") return GenerationOutcome::Kind::Video;
    if (text == "blocked_pre") return GenerationOutcome::Kind::BlockedPre;
    if (text == "blocked_post") return GenerationOutcome::Kind::BlockedPost;
    if (text == "failed") return GenerationOutcome::Kind::Failed;
    throw Error("unknown generation outcome '" + std::string(text) + "'");
}

namespace {

template <typename AnchorFn>
GenerationOutcome run_pipeline(std::string_view risk_text, AnchorFn&& make_anchors, const ScenarioWorld& world,
                               const FilterProfile& profile, const Lexicon& lexicon, std::uint64_t seed,
                               const GenerationOptions& options, GenerationStats* stats) {
    Rng rng(mix64(seed));
    GenerationOutcome out;
    out.risk = text_risk(risk_text, lexicon);

    if (stats) ++stats->pre_filter_calls;
    if (pre_filter(risk_text, profile, lexicon, rng) == PreDecision::Block) {
        out.kind = GenerationOutcome::Kind::BlockedPre;
        return out;
    }

    if (stats) ++stats->generation_calls;
    const int steps = options.steps();
    SimVideo video;
    video.duration = options.duration;
    try {
        const std::vector<Anchor> anchors = make_anchors(steps);
        video.trajectory = sample_trajectory(world, anchors, steps, rng);
    } catch (const UnreachableEndpoint& e) {
        out.kind = GenerationOutcome::Kind::Failed;
        out.error = e.what();
        return out;
    }
    const double state_span = 1.0 / options.states_per_second;
    const double frame_span = state_span / options.frames_per_state;
    for (std::size_t i = 0; i < video.trajectory.size(); ++i) {
        const std::size_t s = video.trajectory[i];
        for (int f = 0; f < options.frames_per_state; ++f) {
            const double t = static_cast<double>(i) * state_span + (f + 1) * frame_span;
            video.frames.push_back({t, world.state(s).descriptor, world.is_unsafe(s), s});
        }
    }

    if (profile.post_enabled) {
        if (stats) ++stats->post_filter_calls;
        if (video.has_unsafe_frame() && rng.uniform() < profile.post_detect) {
            out.kind = GenerationOutcome::Kind::BlockedPost;
            return out;
        }
    }
    out.kind = GenerationOutcome::Kind::Video;
    out.video = std::move(video);
    return out;
}

}  // namespace

GenerationOutcome generate(std::string_view prompt, const ScenarioWorld& world, const FilterProfile& profile,
                           const Lexicon& lexicon, std::uint64_t seed, const GenerationOptions& options,
                           GenerationStats* stats) {
    return run_pipeline(
        prompt, [&](int steps) { return anchors_from_text(prompt, world, steps); }, world, profile, lexicon, seed,
        options, stats);
}

GenerationOutcome generate(const BoundaryPrompt& prompt, const ScenarioWorld& world, const FilterProfile& profile,
                           const Lexicon& lexicon, std::uint64_t seed, const GenerationOptions& options,
                           GenerationStats* stats) {
    const std::string text = render_boundary(prompt);
    return run_pipeline(
        text, [&](int steps) { return anchors_from_boundary(prompt, world, steps); }, world, profile, lexicon, seed,
        options, stats);
}

double analytic_asr(double risk, std::span<const Anchor> anchors, const ScenarioWorld& world,
                    const FilterProfile& profile, int steps) {
    const double pass = 1.0 - pre_block_probability(risk, profile);
    if (pass == 0.0) return 0.0;
    const double evade = profile.post_enabled ? 1.0 - profile.post_detect : 1.0;
    return pass * unsafe_probability(world, anchors, steps) * evade;
}

double analytic_asr(double risk, std::size_t start, std::size_t end, const ScenarioWorld& world,
                    const FilterProfile& profile, int steps) {
    const Anchor anchors[] = {{1, start}, {steps, end}};
    return analytic_asr(risk, anchors, world, profile, steps);
}

SimulatedTarget::SimulatedTarget(const ScenarioWorld& world, FilterProfile profile, const Lexicon& lexicon,
                                 GenerationOptions options)
    : world_(world), profile_(std::move(profile)), lexicon_(lexicon), options_(options) {
    profile_.validate();
}

GenerationOutcome SimulatedTarget::submit(std::string_view prompt, std::uint64_t seed) {
    return generate(prompt, world_, profile_, lexicon_, seed, options_, &stats_);
}

}  // namespace tfm
