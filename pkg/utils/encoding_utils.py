import io

import chardet

from utils.logger import Logger


class EncodingUtils:
    """Utility class for decoding delimited source files.

    Sources are expected in UTF-8; exports from market platforms sometimes
    arrive in GBK or cp1252, so anything that does not decode as UTF-8 is
    run through chardet before parsing.
    """

    def __init__(self):
        self.logger = Logger()

    def read_text_safely(self, filepath: str) -> str:
        """
        Read file content with robust encoding handling.

        Args:
            filepath (str): Path to file to read

        Returns:
            str: Decoded content (BOM stripped, newlines left untouched for the CSV reader)

        Raises:
            ValueError: If no encoding could decode the file
        """
        try:
            with open(filepath, 'rb') as f:
                raw = f.read()

            try:
                return raw.decode('utf-8-sig')
            except UnicodeDecodeError:
                pass  # Not UTF-8, continue to detection

            detected = chardet.detect(raw)
            encoding = detected.get('encoding')
            if encoding:
                self.logger.warning(
                    f"⚠️ {filepath} is not UTF-8, decoding as {encoding} "
                    f"(confidence: {detected.get('confidence')})"
                )
                try:
                    return raw.decode(encoding)
                except (UnicodeDecodeError, LookupError):
                    pass

            for fallback in ('gb18030', 'cp1252'):
                try:
                    text = raw.decode(fallback)
                    self.logger.warning(f"⚠️ {filepath} decoded with fallback {fallback}")
                    return text
                except UnicodeDecodeError:
                    continue

            raise ValueError(f"Could not detect encoding for {filepath}")

        except Exception as e:
            self.logger.error(f"❌ Failed to read {filepath}: {str(e)}")
            raise

    def open_text_safely(self, filepath: str) -> io.StringIO:
        """File-like view over ``read_text_safely`` for pandas readers."""
        return io.StringIO(self.read_text_safely(filepath), newline='')
