// Wire types for the session service JSON protocol.
export {};
