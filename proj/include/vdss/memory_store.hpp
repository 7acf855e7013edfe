#pragma once

// Layered memory: an append-only NDJSON log of hashed envelopes (long-term
// memory and evidence trail) plus the short-term context window derived from
// it. An empty path keeps the log in memory only.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdss/bandit.hpp"
#include "vdss/contracts.hpp"

namespace vdss {

enum class EnvelopeKind { cycle_record, preference_snapshot, note };
VDSS_ENUM_NAMES(EnvelopeKind, "cycle_record", "preference_snapshot", "note");

struct EnvelopeDraft {
    EnvelopeKind kind = EnvelopeKind::note;
    double timestamp = 0.0;
    std::string encounter_id;
    std::string clinician_id;
    std::string cycle_id;
    nlohmann::json payload;
};

struct Envelope {
    std::uint64_t offset = 0;
    double timestamp = 0.0;
    EnvelopeKind kind = EnvelopeKind::note;
    std::string encounter_id;
    std::string clinician_id;
    std::string cycle_id;
    nlohmann::json payload;
    std::string content_hash;

    nlohmann::json to_json() const;
};

/// sha256 of the canonical (sorted-key, compact) payload encoding.
std::string content_hash(const nlohmann::json& payload);

struct NoteEntry {
    std::uint64_t offset = 0;
    std::string cycle_id;
    std::string text;
};

struct ShortTermContext {
    std::vector<NoteEntry> notes;  // most recent first
    std::optional<VentilatorSettings> last_accepted;
    std::optional<std::uint64_t> last_accepted_offset;
};

struct LoadReport {
    std::uint64_t entries = 0;
    std::uint64_t corrupt_entries = 0;
    std::uint64_t truncated_bytes = 0;  // torn tail dropped on open
};

class MemoryStore {
public:
    /// Opens (creating if needed) the log at `path`; empty path = in-memory.
    /// A torn final line is truncated away; corrupt interior lines are kept
    /// as placeholders that raise IntegrityError when read.
    explicit MemoryStore(std::filesystem::path path = {});

    /// Appends one envelope durably; returns its offset. Throws
    /// PersistenceError with nothing visible on failure.
    std::uint64_t append(const EnvelopeDraft& draft);
    /// All-or-nothing append of several envelopes.
    std::vector<std::uint64_t> append_batch(const std::vector<EnvelopeDraft>& drafts);

    std::uint64_t size() const;
    /// Throws IntegrityError on a corrupt line or hash mismatch.
    Envelope read(std::uint64_t offset) const;
    /// Every envelope in offset order, verified.
    std::vector<Envelope> entries() const;
    std::vector<Envelope> entries_for_encounter(const std::string& encounter_id) const;
    std::vector<Envelope> entries_for_cycle(const std::string& cycle_id) const;

    ShortTermContext context_window(const std::string& encounter_id, std::size_t n) const;

    /// Latest snapshot for the clinician, or a fresh state with `hyper`.
    PreferenceState load_preference_state(const std::string& clinician_id, const BanditHyperparams& hyper) const;
    std::optional<std::uint64_t> latest_snapshot_offset(const std::string& clinician_id) const;

    /// Cycle records in log order, optionally filtered by clinician.
    std::vector<CycleRecord> cycle_records(const std::string& clinician_id = {}) const;
    std::optional<CycleRecord> find_cycle_record(const std::string& cycle_id) const;

    /// Evidence trail for one encounter as a single JSON document.
    nlohmann::json export_trail(const std::string& encounter_id) const;

    const LoadReport& load_report() const { return load_report_; }
    const std::filesystem::path& path() const { return path_; }

    /// Serializes read-modify-write sequences for one clinician's state.
    std::mutex& clinician_mutex(const std::string& clinician_id);

    /// Test hook: the next write fails after `bytes` bytes reach the file.
    void fail_next_write_after(std::size_t bytes);

private:
    struct Slot {
        std::optional<Envelope> envelope;  // nullopt: corrupt line
        std::string raw;
    };

    Envelope verified(std::uint64_t offset) const;
    void load();
    void write_lines(const std::string& data);

    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::vector<Slot> slots_;
    std::map<std::string, std::uint64_t> latest_snapshot_;
    std::map<std::string, std::vector<std::uint64_t>> by_encounter_;
    std::map<std::string, std::unique_ptr<std::mutex>> clinician_locks_;
    std::mutex locks_mu_;
    std::optional<std::size_t> fail_after_;
    LoadReport load_report_;
};

/// Event-sourced reconstruction: fold every cycle record of the clinician
/// through the bandit update it received at closure.
PreferenceState replay_preference_state(const MemoryStore& store, const std::string& clinician_id,
                                        const BanditHyperparams& hyper, bool apply_hold_signal = false);

}  // namespace vdss
