//! Simulated controllers, one per subsystem.

pub mod accident;
pub mod display;
pub mod home;
pub mod lcd;
pub mod parking;
pub mod security;
pub mod streetlight;
pub mod traffic;

pub use accident::Accident;
pub use display::InfoDisplay;
pub use home::ApplianceBank;
pub use parking::Parking;
pub use security::Security;
pub use streetlight::Streetlight;
pub use traffic::Traffic;
