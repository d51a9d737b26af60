//! Multi-user transform synchronization.

pub mod codec;
pub mod emulator;
pub mod interp;
pub mod relay;
pub mod session;

pub use codec::{decode_update, encode_update, encode_update_matrix, CodecError, PacketKind, UpdatePacket, UpdateRecord};
pub use emulator::{emulate, Link, NetProfile};
pub use interp::InterpBuffer;
pub use relay::{relay_tick, SessionState};
pub use session::{run_session, SessionSimConfig, SessionSimReport};

/// Translation change that triggers a publish (0.5 mm).
pub const PUBLISH_TRANSLATION_M: f64 = 0.5e-3;
/// Rotation change that triggers a publish (0.1°).
pub const PUBLISH_ROTATION_DEG: f64 = 0.1;
pub const DEFAULT_PUBLISH_HZ: f64 = 20.0;
